#include "syntrack/tracker.hpp"

#include <cmath>
#include <stdexcept>

namespace syntrack {

Mat8 default_mode_transition() {
    Mat8 pi = Mat8::Zero();
    const double self = 0.9, adjacent = 0.04;
    const double rest = (1.0 - self - 2.0 * adjacent) / 5.0;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const int d = std::abs(i - j);
            const int ring = std::min(d, 8 - d);
            pi(i, j) = ring == 0 ? self : (ring == 1 ? adjacent : rest);
        }
    return pi;
}

namespace {

// Symmetrize and clamp negative eigenvalues; returns true when a repair was
// actually needed.
bool repair_psd(Mat4& p) {
    p = ((p + p.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Mat4> es(p);
    if (es.eigenvalues().minCoeff() >= 0.0) return false;
    Vec4 ev = es.eigenvalues().cwiseMax(1e-12);
    p = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
    return true;
}

struct ModePrediction {
    Vec4 mean;
    Mat4 jac;  // transition Jacobian for covariance propagation
};

// Mode-matched one-step prediction: constant velocity, optionally with the
// velocity rotated onto the mode direction (v+ = speed * dir). The speed is
// supplied by the caller rather than taken as |v|, because mixing opposing
// mode hypotheses cancels the velocity vector while the speed itself is
// direction-free and survives. The rotation's Jacobian dir (v/|v|)'
// collapses the cross-direction velocity covariance, so each mode filter
// genuinely asserts its heading and a wrong mode is punished through the
// precise range-rate channel.
ModePrediction predict_mode(const Vec4& x, int mode, const NoiseConfig& noise, bool steered,
                            double min_steer_speed, double speed) {
    const double T = noise.T;
    const Vec2 v(x(2), x(3));
    ModePrediction out;
    if (steered && speed >= min_steer_speed) {
        const Vec2 dir = mode_direction(mode).unit();
        const Vec2 v_new = speed * dir;
        out.mean.head<2>() = x.head<2>() + T * 0.5 * (v + v_new);
        out.mean.tail<2>() = v_new;
        const double vnorm = v.norm();
        const Mat2 rot = vnorm > 1e-9 ? Mat2(dir * (v / vnorm).transpose())
                                      : Mat2(dir * dir.transpose());
        out.jac.setIdentity();
        out.jac.topRightCorner<2, 2>() = T * 0.5 * (Mat2::Identity() + rot);
        out.jac.bottomRightCorner<2, 2>() = rot;
        return out;
    }
    out.mean = x;
    out.mean.head<2>() += T * v;
    out.jac = transition_matrices(T).F;
    return out;
}

Mat4 process_noise(int mode, const NoiseConfig& noise) {
    const auto tm = transition_matrices(noise.T);
    const Mat2 q = mode_noise_cov(mode_direction(mode), noise);
    return tm.G * q * tm.G.transpose();
}

double log_gaussian(const Vec3& residual, const Mat3& cov) {
    Eigen::LLT<Mat3> llt(cov);
    if (llt.info() != Eigen::Success) return -1e300;
    const Vec3 sol = llt.solve(residual);
    double log_det = 0.0;
    for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * (residual.dot(sol) + log_det + 3.0 * std::log(2.0 * M_PI));
}

std::map<std::string, double> to_mode_map(const Vec8& w) {
    std::map<std::string, double> out;
    for (int j = 0; j < 8; ++j) out[mode_direction(j).terminal] = w(j);
    return out;
}

Vec8 from_mode_map(const std::map<std::string, double>& m, const char* what) {
    Vec8 out;
    double sum = 0.0;
    for (int j = 0; j < 8; ++j) {
        auto it = m.find(mode_direction(j).terminal);
        if (it == m.end()) throw std::invalid_argument(std::string(what) + ": missing mode terminal");
        out(j) = it->second;
        sum += it->second;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw std::invalid_argument(std::string(what) + ": distribution does not sum to 1");
    return out;
}

}  // namespace

namespace {

// Position from the converted measurement; velocity prior anchored by the
// measured range rate, which fixes the along-line-of-sight component (up to
// the bearing uncertainty) and leaves the cross component wide open.
void initial_state(const Detection& d, const NoiseConfig& cfg, double velocity_prior_std,
                   Vec4& x0, Mat4& p0) {
    const auto conv = convert_measurement(d, cfg);
    const Vec2 rel(conv.z(0) - d.platform.x, conv.z(1) - d.platform.y);
    const double rho = rel.norm();
    const Vec2 los = rel / rho;
    const double slant = std::sqrt(rho * rho + d.platform.z * d.platform.z);
    const double along = d.rdot * slant / rho + Vec2(d.platform.vx, d.platform.vy).dot(los);

    x0 = Vec4(conv.z(0), conv.z(1), along * los(0), along * los(1));
    // Bearing error rotates both the platform velocity projection and the
    // target speed into the along component.
    const double platform_speed = std::hypot(d.platform.vx, d.platform.vy);
    const double s_along = std::hypot(cfg.sigma_rdot * slant / rho,
                                      (platform_speed + velocity_prior_std) * cfg.sigma_theta);
    const Vec2 cross(-los(1), los(0));
    const Mat2 v_cov = s_along * s_along * los * los.transpose() +
                       velocity_prior_std * velocity_prior_std * cross * cross.transpose();
    p0 = Mat4::Zero();
    p0.topLeftCorner<2, 2>() = conv.R.topLeftCorner<2, 2>();
    p0.bottomRightCorner<2, 2>() = v_cov;
}

}  // namespace

ImmBank imm_init(const Detection& d, const NoiseConfig& cfg, double velocity_prior_std) {
    if (d.is_miss) throw std::invalid_argument("imm_init: cannot initialize from a miss");
    ImmBank bank;
    bank.t = d.t;
    Vec4 x0;
    Mat4 p0;
    initial_state(d, cfg, velocity_prior_std, x0, p0);

    // Mode-matched start: each bank asserts its own heading at the speed the
    // measured range rate implies for that heading, so the very first update
    // already ranks directions instead of burning scans on a settling
    // transient. Headings nearly orthogonal to the line of sight get the
    // direction-free prior instead.
    const Vec2 rel(x0(0) - d.platform.x, x0(1) - d.platform.y);
    const double rho = rel.norm();
    const Vec2 los = rel / rho;
    const double slant = std::sqrt(rho * rho + d.platform.z * d.platform.z);
    const double rdot_ground = d.rdot * slant / rho + Vec2(d.platform.vx, d.platform.vy).dot(los);
    for (int j = 0; j < 8; ++j) {
        bank.x[j] = x0;
        bank.P[j] = p0;
        const Vec2 dir = mode_direction(j).unit();
        const double proj = dir.dot(los);
        if (std::abs(proj) < 0.25) continue;
        const double speed = rdot_ground / proj;
        if (speed < 0.0 || speed > 3.0 * velocity_prior_std) continue;
        bank.x[j].tail<2>() = speed * dir;
    }
    return bank;
}

ImmStepResult imm_step(ImmBank& bank, const Detection& d, const NoiseConfig& noise,
                       const ImmConfig& cfg, const std::map<std::string, double>* mode_prior) {
    ImmStepResult res;
    const auto tm = transition_matrices(noise.T);

    // Mixing probabilities u(i|j) and predicted mode mass c_j.
    Vec8 c = cfg.pi.transpose() * bank.w;
    Eigen::Matrix<double, 8, 8> u;
    for (int j = 0; j < 8; ++j)
        for (int i = 0; i < 8; ++i) u(i, j) = c(j) > 0.0 ? cfg.pi(i, j) * bank.w(i) / c(j) : 0.0;

    // Mixed initial conditions, plus a mixed speed from the per-mode velocity
    // magnitudes (the vector mixture cancels when hypotheses disagree).
    std::array<Vec4, 8> x0;
    std::array<Mat4, 8> p0;
    std::array<double, 8> speed0;
    for (int j = 0; j < 8; ++j) {
        x0[j].setZero();
        speed0[j] = 0.0;
        for (int i = 0; i < 8; ++i) {
            x0[j] += u(i, j) * bank.x[i];
            speed0[j] += u(i, j) * bank.x[i].tail<2>().norm();
        }
        p0[j].setZero();
        for (int i = 0; i < 8; ++i) {
            const Vec4 dx = bank.x[i] - x0[j];
            p0[j] += u(i, j) * (bank.P[i] + dx * dx.transpose());
        }
    }

    Vec8 w;
    if (d.is_miss) {
        for (int j = 0; j < 8; ++j) {
            const auto pred = predict_mode(x0[j], j, noise, cfg.steered, cfg.min_steer_speed, speed0[j]);
            bank.x[j] = pred.mean;
            bank.P[j] = pred.jac * p0[j] * pred.jac.transpose() + process_noise(j, noise);
            if (repair_psd(bank.P[j])) res.covariance_repaired = true;
        }
        w = c;
    } else {
        const auto conv = convert_measurement(d, noise);
        Vec8 log_lik;
        for (int j = 0; j < 8; ++j) {
            const auto mode_pred =
                predict_mode(x0[j], j, noise, cfg.steered, cfg.min_steer_speed, speed0[j]);
            const Vec4 xp = mode_pred.mean;
            Mat4 pp = mode_pred.jac * p0[j] * mode_pred.jac.transpose() + process_noise(j, noise);
            const KinematicState pred = KinematicState::from_vec(xp, pp, d.t);
            {
                const Mat34 h = measurement_jacobian(pred, d.platform);
                const Vec3 innovation = conv.z - converted_prediction(pred, d.platform);
                const Mat3 s = h * pp * h.transpose() + conv.R;
                log_lik(j) = log_gaussian(innovation, s);
            }

            // Iterated update: the range-rate channel is precise enough that a
            // single linearization at a poor prediction can throw the state;
            // re-linearizing at the running estimate keeps it on the manifold.
            Vec4 xi = xp;
            Mat34 h;
            Eigen::Matrix<double, 4, 3> gain;
            for (int it = 0; it < 3; ++it) {
                const KinematicState at = KinematicState::from_vec(xi, pp, d.t);
                h = measurement_jacobian(at, d.platform);
                const Mat3 s = h * pp * h.transpose() + conv.R;
                gain = pp * h.transpose() * s.inverse();
                xi = xp + gain * (conv.z - converted_prediction(at, d.platform) - h * (xp - xi));
            }
            bank.x[j] = xi;
            const Mat4 ikh = Mat4::Identity() - gain * h;
            bank.P[j] = ikh * pp * ikh.transpose() + gain * conv.R * gain.transpose();
            if (repair_psd(bank.P[j])) res.covariance_repaired = true;
        }

        Vec8 c_used = c;
        if (mode_prior && cfg.feedback_apply == ImmConfig::FeedbackApply::PreLikelihood) {
            const Vec8 prior = from_mode_map(*mode_prior, "imm_step mode_prior");
            c_used = cfg.feedback_weight * prior + (1.0 - cfg.feedback_weight) * c;
        }
        const double shift = log_lik.maxCoeff();
        for (int j = 0; j < 8; ++j)
            w(j) = std::exp(std::max(log_lik(j) - shift, -cfg.loglik_ratio_cap)) * c_used(j);
        const double total = w.sum();
        if (total <= 0.0 || !std::isfinite(total)) {
            w = c_used;
            res.likelihood_underflow = true;
        } else {
            w /= total;
        }
        if (mode_prior && cfg.feedback_apply == ImmConfig::FeedbackApply::PostLikelihood) {
            const Vec8 prior = from_mode_map(*mode_prior, "imm_step mode_prior");
            w = cfg.feedback_weight * prior + (1.0 - cfg.feedback_weight) * w;
        }
    }
    w /= w.sum();
    if (cfg.mode_floor > 0.0) {
        w = w.cwiseMax(cfg.mode_floor);
        w /= w.sum();
    }
    bank.w = w;
    bank.t = d.t;

    Vec4 x_comb = Vec4::Zero();
    for (int j = 0; j < 8; ++j) x_comb += w(j) * bank.x[j];
    Mat4 p_comb = Mat4::Zero();
    for (int j = 0; j < 8; ++j) {
        const Vec4 dx = bank.x[j] - x_comb;
        p_comb += w(j) * (bank.P[j] + dx * dx.transpose());
    }
    if (repair_psd(p_comb)) res.covariance_repaired = true;

    res.combined = KinematicState::from_vec(x_comb, p_comb, d.t);
    res.mode_probs = to_mode_map(w);
    return res;
}

Vec2 imm_predicted_position(const ImmBank& bank, const NoiseConfig& noise, const ImmConfig& cfg) {
    Vec2 out = Vec2::Zero();
    for (int j = 0; j < 8; ++j)
        out += bank.w(j) *
               predict_mode(bank.x[j], j, noise, cfg.steered, cfg.min_steer_speed,
                            bank.x[j].tail<2>().norm())
                   .mean.head<2>();
    return out;
}

std::map<std::string, double> feedback_mix(const std::map<std::string, double>& rg_probs,
                                           const std::map<std::string, double>& cfg_probs,
                                           double weight_cfg) {
    if (weight_cfg < 0.0 || weight_cfg > 1.0)
        throw std::invalid_argument("feedback_mix: weight outside [0, 1]");
    if (rg_probs.size() != cfg_probs.size())
        throw std::invalid_argument("feedback_mix: mismatched supports");
    std::map<std::string, double> out;
    for (const auto& [term, rg] : rg_probs) {
        auto it = cfg_probs.find(term);
        if (it == cfg_probs.end()) throw std::invalid_argument("feedback_mix: mismatched supports");
        out[term] = weight_cfg * it->second + (1.0 - weight_cfg) * rg;
    }
    return out;
}

// ---- particle filter ---------------------------------------------------------

double effective_sample_size(const ParticleSet& ps) {
    double sum_sq = 0.0;
    for (const auto& p : ps.particles) sum_sq += p.w * p.w;
    if (sum_sq <= 0.0) return 0.0;
    return 1.0 / sum_sq;
}

ParticleSet pf_init(const Detection& d, const NoiseConfig& cfg, int count, RandomStream& rng,
                    double velocity_prior_std) {
    if (d.is_miss) throw std::invalid_argument("pf_init: cannot initialize from a miss");
    if (count < 1) throw std::invalid_argument("pf_init: need at least one particle");
    Vec4 x0;
    Mat4 p0;
    initial_state(d, cfg, velocity_prior_std, x0, p0);
    Eigen::LLT<Mat4> llt(p0);
    ParticleSet ps;
    ps.t = d.t;
    ps.particles.resize(count);
    for (auto& p : ps.particles) {
        Vec4 noise_v(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        p.x = x0 + llt.matrixL() * noise_v;
        p.mode = int(rng.raw() % 8);
        p.w = 1.0 / count;
    }
    return ps;
}

namespace {

template <typename LogLikelihood>
PfStepResult pf_cycle(ParticleSet& ps, int t, const NoiseConfig& noise, const PfConfig& cfg,
                      RandomStream& rng, bool has_measurement, LogLikelihood&& log_lik) {
    PfStepResult res;
    const int n = int(ps.particles.size());

    std::array<Eigen::LLT<Mat2>, 8> chol;
    for (int j = 0; j < 8; ++j) chol[j] = Eigen::LLT<Mat2>(mode_noise_cov(mode_direction(j), noise));
    const auto tm = transition_matrices(noise.T);

    std::vector<double> row(8);
    std::vector<double> loglik(n, 0.0);
    for (auto& p : ps.particles) {
        for (int j = 0; j < 8; ++j) row[j] = cfg.pi(p.mode, j);
        p.mode = int(rng.discrete(row));
        Vec4 mean = predict_mode(p.x, p.mode, noise, cfg.steered, cfg.min_steer_speed,
                                 p.x.tail<2>().norm())
                        .mean;
        const Vec2 v(rng.normal(), rng.normal());
        p.x = mean + tm.G * (chol[p.mode].matrixL() * v);
    }
    if (has_measurement) {
        double max_ll = -1e300;
        for (int i = 0; i < n; ++i) {
            loglik[i] = log_lik(ps.particles[i]);
            max_ll = std::max(max_ll, loglik[i]);
        }
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            ps.particles[i].w *= std::exp(loglik[i] - max_ll);
            total += ps.particles[i].w;
        }
        if (total <= 0.0 || !std::isfinite(total)) {
            for (auto& p : ps.particles) p.w = 1.0 / n;
            res.weight_underflow = true;
        } else {
            for (auto& p : ps.particles) p.w /= total;
        }
    } else {
        double total = 0.0;
        for (const auto& p : ps.particles) total += p.w;
        for (auto& p : ps.particles) p.w /= total;
    }
    ps.t = t;

    Vec4 mean = Vec4::Zero();
    for (const auto& p : ps.particles) mean += p.w * p.x;
    Mat4 cov = Mat4::Zero();
    for (const auto& p : ps.particles) {
        const Vec4 dx = p.x - mean;
        cov += p.w * (dx * dx.transpose());
    }
    res.combined = KinematicState::from_vec(mean, cov, t);

    Vec8 mode_w = Vec8::Zero();
    for (const auto& p : ps.particles) mode_w(p.mode) += p.w;
    res.mode_probs = to_mode_map(mode_w);

    res.n_eff = effective_sample_size(ps);
    if (res.n_eff < cfg.resample_threshold * n) {
        systematic_resample(ps, rng);
        res.resampled = true;
    }
    return res;
}

}  // namespace

PfStepResult pf_step(ParticleSet& ps, const Detection& d, const NoiseConfig& noise,
                     const PfConfig& cfg, RandomStream& rng) {
    if (d.is_miss)
        return pf_cycle(ps, d.t, noise, cfg, rng, false, [](const Particle&) { return 0.0; });
    const auto conv = convert_measurement(d, noise);
    Eigen::LLT<Mat3> llt(conv.R);
    double log_det = 0.0;
    for (int i = 0; i < 3; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    return pf_cycle(ps, d.t, noise, cfg, rng, true, [&](const Particle& p) {
        const KinematicState s = KinematicState::from_vec(p.x, Mat4::Zero(), d.t);
        const Vec3 residual = conv.z - converted_prediction(s, d.platform);
        const Vec3 sol = llt.solve(residual);
        return -0.5 * (residual.dot(sol) + log_det + 3.0 * std::log(2.0 * M_PI));
    });
}

PfStepResult pf_step_position(ParticleSet& ps, const Vec2& z, const Mat2& R,
                              const NoiseConfig& noise, const PfConfig& cfg, RandomStream& rng) {
    Eigen::LLT<Mat2> llt(R);
    double log_det = 0.0;
    for (int i = 0; i < 2; ++i) log_det += 2.0 * std::log(llt.matrixL()(i, i));
    return pf_cycle(ps, ps.t + 1, noise, cfg, rng, true, [&](const Particle& p) {
        const Vec2 residual = z - p.x.head<2>();
        const Vec2 sol = llt.solve(residual);
        return -0.5 * (residual.dot(sol) + log_det + 2.0 * std::log(2.0 * M_PI));
    });
}

void systematic_resample(ParticleSet& ps, RandomStream& rng) {
    const int n = int(ps.particles.size());
    if (n == 0) return;
    std::vector<Particle> out;
    out.reserve(n);
    const double step = 1.0 / n;
    double u = rng.uniform() * step;
    double acc = ps.particles[0].w;
    int i = 0;
    for (int j = 0; j < n; ++j) {
        const double target = u + j * step;
        while (acc < target && i + 1 < n) acc += ps.particles[++i].w;
        Particle p = ps.particles[i];
        p.w = step;
        out.push_back(p);
    }
    ps.particles = std::move(out);
}

Vec2 pf_predicted_position(const ParticleSet& ps, const NoiseConfig& noise) {
    Vec2 out = Vec2::Zero();
    for (const auto& p : ps.particles) out += p.w * (p.x.head<2>() + noise.T * p.x.tail<2>());
    return out;
}

}  // namespace syntrack
