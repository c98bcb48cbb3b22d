#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace syntrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat42 = Eigen::Matrix<double, 4, 2>;

/// Planar position/velocity estimate with covariance at a scan index.
struct KinematicState {
    double x = 0.0, y = 0.0;
    double vx = 0.0, vy = 0.0;
    Mat4 cov = Mat4::Zero();
    int t = 0;

    Vec2 position() const { return {x, y}; }
    Vec2 velocity() const { return {vx, vy}; }
    Vec4 vec() const { return {x, y, vx, vy}; }
    static KinematicState from_vec(const Vec4& v, const Mat4& p, int t) {
        return {v(0), v(1), v(2), v(3), p, t};
    }
};

/// One of the eight motion modes a..h, 45 degrees apart.
struct ModeDirection {
    std::string terminal;
    double angle = 0.0;  // radians, multiples of pi/4 ending at 2*pi

    /// Unit direction of travel: (cos angle, sin angle); mode b points north.
    Vec2 unit() const { return {std::cos(angle), std::sin(angle)}; }
};

const std::vector<ModeDirection>& mode_directions();
const ModeDirection& mode_direction(const std::string& terminal);
const ModeDirection& mode_direction(int index);
int mode_index(const std::string& terminal);

/// Sensor platform state; z is the altitude above the flat target plane.
struct Platform {
    double x = 0.0, y = 0.0, z = 0.0;
    double vx = 0.0, vy = 0.0;

    Platform at_time(double dt) const { return {x + vx * dt, y + vy * dt, z, vx, vy}; }
};

/// Range / range-rate / azimuth detection, or a missed-detection marker.
struct Detection {
    double r = 0.0;
    double rdot = 0.0;
    double theta = 0.0;  // azimuth from the +y axis toward +x, in (-pi, pi]
    Platform platform;
    int t = 0;
    bool is_miss = false;
};

struct NoiseConfig {
    double sigma_along = 0.5;   // process noise along the mode direction
    double sigma_ortho = 0.05;  // process noise orthogonal to it
    double sigma_r = 5.0;       // range std dev, meters
    double sigma_rdot = 0.1;    // range rate std dev, m/s
    double sigma_theta = 2.5 * M_PI / 180.0;  // azimuth std dev, radians
    double T = 1.0;             // sample period, seconds
    // The experiment's noise table pairs 0.05/0.5 with parallel/orthogonal;
    // the default above follows the physical reading (lateral motion is the
    // constrained one). This flag restores the literal pairing.
    bool literal_noise_pairing = false;

    double along() const { return literal_noise_pairing ? sigma_ortho : sigma_along; }
    double ortho() const { return literal_noise_pairing ? sigma_along : sigma_ortho; }

    /// Throws std::invalid_argument unless every std dev and T is positive.
    void require_positive() const;
};

struct TransitionMatrices {
    Mat4 F;
    Mat42 G;
};

/// Constant-velocity transition and noise gain for sample period T.
TransitionMatrices transition_matrices(double T);

/// Process noise covariance for a mode: diag(sigma_a^2, sigma_o^2) conjugated
/// by the mode rotation [[sin a, cos a], [-cos a, sin a]].
Mat2 mode_noise_cov(const ModeDirection& mode, const NoiseConfig& cfg);

struct RangeMeasurement {
    double r;
    double rdot;
    double theta;
};

/// Noise-free measurement of a target from the platform: slant range, range
/// rate, and azimuth theta = atan2(x_rel, y_rel).
RangeMeasurement observe(const KinematicState& state, const Platform& platform);

struct ConvertedMeasurement {
    Vec3 z;   // absolute x, y, and range rate
    Mat3 R;   // induced covariance
};

/// Detection mapped to Cartesian position plus range rate. Slant range is
/// projected onto the ground plane using the platform altitude, so with a
/// flat-plane setup observe() followed by convert_measurement() recovers the
/// target position exactly. The covariance follows the standard converted
/// model: sigma_x^2 = rho^2 s_t^2 cos^2(theta) + s_r^2 sin^2(theta), etc.,
/// with rho the ground range and s_r scaled by the slant-to-ground factor.
ConvertedMeasurement convert_measurement(const Detection& d, const NoiseConfig& cfg);

/// Partials of (x, y, rdot) with respect to (x, y, vx, vy): identity rows for
/// position and analytic range-rate row.
Mat34 measurement_jacobian(const KinematicState& state, const Platform& platform);

/// Predicted converted measurement (x, y, rdot) for a state.
Vec3 converted_prediction(const KinematicState& state, const Platform& platform);

// ---- detection stream formats ----------------------------------------------

std::string detection_to_json_line(const Detection& d);
Detection detection_from_json_line(const std::string& line);

std::string detections_to_csv(const std::vector<Detection>& ds);
std::vector<Detection> detections_from_csv(const std::string& text);

std::vector<Detection> load_detections(const std::string& path);
void save_detections_jsonl(const std::vector<Detection>& ds, const std::string& path);

}  // namespace syntrack
