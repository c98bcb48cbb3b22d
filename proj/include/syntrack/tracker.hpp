#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "syntrack/kinematics.hpp"
#include "syntrack/random.hpp"

namespace syntrack {

using Mat8 = Eigen::Matrix<double, 8, 8>;
using Vec8 = Eigen::Matrix<double, 8, 1>;

/// Row-stochastic mode transition matrix: 0.9 self, 0.04 to each of the two
/// adjacent directions on the compass ring, the remainder split evenly over
/// the other five modes so every row sums to exactly 1.
Mat8 default_mode_transition();

struct ImmConfig {
    Mat8 pi = default_mode_transition();
    /// Mode-matched prediction rotates the velocity onto the mode direction
    /// (the same hard steering the generator uses); without it the eight
    /// constant-velocity filters differ only in process-noise orientation and
    /// opposite headings are indistinguishable.
    bool steered = true;
    double min_steer_speed = 1.0;  // m/s; below this the estimate carries no heading
    /// Per-scan log-likelihood ratios are clamped and the posterior mode
    /// probabilities floored. The Gaussian tails are wrong under hard turn
    /// discontinuities, and an unbounded update locks the bank onto a wrong
    /// mode with 1e-15 style certainty that takes tens of scans to unwind.
    double loglik_ratio_cap = 10.0;
    double mode_floor = 0.01;
    double feedback_weight = 0.5;
    enum class FeedbackApply { PostLikelihood, PreLikelihood } feedback_apply =
        FeedbackApply::PostLikelihood;
};

/// Bank of eight mode-matched extended Kalman filters with mode probabilities.
struct ImmBank {
    std::array<Vec4, 8> x{};
    std::array<Mat4, 8> P{};
    Vec8 w = Vec8::Constant(1.0 / 8.0);
    int t = 0;
};

struct ImmStepResult {
    KinematicState combined;
    std::map<std::string, double> mode_probs;
    bool covariance_repaired = false;
    bool likelihood_underflow = false;
};

/// Bank initialized from the first detection: converted position, zero
/// velocity with a broad prior, uniform mode probabilities.
ImmBank imm_init(const Detection& d, const NoiseConfig& cfg, double velocity_prior_std = 20.0);

/// One interacting-multiple-model cycle: mixing, per-mode EKF predict/update
/// in the converted measurement space, mode probability update (optionally
/// blended with a syntactic mode prior), and estimate combination. A missed
/// detection runs the predict-only half, propagating mode probabilities
/// through the transition matrix.
ImmStepResult imm_step(ImmBank& bank, const Detection& d, const NoiseConfig& noise,
                       const ImmConfig& cfg,
                       const std::map<std::string, double>* mode_prior = nullptr);

/// Predicted position of the bank one sample period ahead (association gate).
Vec2 imm_predicted_position(const ImmBank& bank, const NoiseConfig& noise, const ImmConfig& cfg);

/// Bayesian model averaging of the regular-grammar and context-free mode
/// distributions: weight_cfg * cfg + (1 - weight_cfg) * rg.
std::map<std::string, double> feedback_mix(const std::map<std::string, double>& rg_probs,
                                           const std::map<std::string, double>& cfg_probs,
                                           double weight_cfg);

// ---- multiple-model particle filter -----------------------------------------

struct Particle {
    Vec4 x = Vec4::Zero();
    int mode = 0;
    double w = 0.0;
};

struct ParticleSet {
    std::vector<Particle> particles;
    int t = 0;
};

struct PfConfig {
    Mat8 pi = default_mode_transition();
    double resample_threshold = 0.5;  // resample when N_eff < threshold * N
    bool steered = true;
    double min_steer_speed = 1.0;
};

struct PfStepResult {
    KinematicState combined;
    std::map<std::string, double> mode_probs;
    double n_eff = 0.0;
    bool resampled = false;
    bool weight_underflow = false;
};

/// 1 / sum(w_i^2) for normalized weights.
double effective_sample_size(const ParticleSet& ps);

ParticleSet pf_init(const Detection& d, const NoiseConfig& cfg, int count, RandomStream& rng,
                    double velocity_prior_std = 20.0);

/// Mode transition sampling, mode-conditioned propagation, weighting by the
/// converted-measurement likelihood (weights unchanged on a miss), and
/// systematic resampling when the effective sample size degenerates.
PfStepResult pf_step(ParticleSet& ps, const Detection& d, const NoiseConfig& noise,
                     const PfConfig& cfg, RandomStream& rng);

/// Same cycle against a direct linear position measurement z = (x, y) with
/// covariance R; single-mode configs make this exactly linear-Gaussian.
PfStepResult pf_step_position(ParticleSet& ps, const Vec2& z, const Mat2& R,
                              const NoiseConfig& noise, const PfConfig& cfg, RandomStream& rng);

void systematic_resample(ParticleSet& ps, RandomStream& rng);

Vec2 pf_predicted_position(const ParticleSet& ps, const NoiseConfig& noise);

}  // namespace syntrack
