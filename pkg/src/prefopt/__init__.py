"""prefopt: learn control policies directly from preferences over trajectory
segments, plus the baselines and diagnostics to check that it works."""

from .nn import (AdamState, GradBuffer, MlpModel, NonFiniteError, ShapeError,
                 adam_init, adam_step, check_gradient, load_model, mlp_backward,
                 mlp_forward, mlp_forward_cached, mlp_init, save_model)
from .envs import (EnvSpec, Trajectory, env_reset, env_step, make_env,
                   mean_return, normalized_return, reference_policy, rollout)
from .data import (DataError, DatasetManifest, PreferenceTriple, Segment,
                   TrajectoryDataset, append_pref, generate_offline_dataset,
                   generate_pref_dataset, load_manifest, load_prefs,
                   load_trajectories, sample_overlapping_pair,
                   sample_segment_pair, save_manifest, save_prefs,
                   save_trajectories, scripted_label, top_fraction_filter)
from .predictor import (PredictorModel, PredictorTrainConfig, load_predictor,
                        pref_prob, predictor_init, predictor_loss,
                        save_predictor, segment_score, smoothness_profile,
                        train_predictor)
from .policy_opt import (PolicyModel, PolicyTrainConfig, as_rollout_policy,
                         batch_score, load_policy, pair_score,
                         pair_score_from_distances, policy_action, policy_init,
                         pseudo_label, save_policy, score_oracle_check,
                         segment_distance, train_policy, transition_distance)
from .baselines import (BcConfig, RewardModel, RewardTrainConfig, bc_train,
                        bt_reward_loss, bt_train, load_reward_model,
                        pct_bc_train, reward_fidelity_report,
                        reward_regression_train, save_reward_model)

__version__ = "0.1.0"
