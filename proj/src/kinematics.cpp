#include "syntrack/kinematics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace syntrack {

const std::vector<ModeDirection>& mode_directions() {
    static const std::vector<ModeDirection> modes = [] {
        std::vector<ModeDirection> m;
        const std::string names = "abcdefgh";
        for (int i = 0; i < 8; ++i) m.push_back({std::string(1, names[i]), (i + 1) * M_PI / 4.0});
        return m;
    }();
    return modes;
}

int mode_index(const std::string& terminal) {
    if (terminal.size() == 1 && terminal[0] >= 'a' && terminal[0] <= 'h') return terminal[0] - 'a';
    return -1;
}

const ModeDirection& mode_direction(const std::string& terminal) {
    const int i = mode_index(terminal);
    if (i < 0) throw std::invalid_argument("unknown mode terminal: " + terminal);
    return mode_directions()[i];
}

const ModeDirection& mode_direction(int index) {
    if (index < 0 || index >= 8) throw std::invalid_argument("mode index out of range");
    return mode_directions()[index];
}

void NoiseConfig::require_positive() const {
    auto check = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string("NoiseConfig: ") + name + " must be > 0");
    };
    check(sigma_along, "sigma_along");
    check(sigma_ortho, "sigma_ortho");
    check(sigma_r, "sigma_r");
    check(sigma_rdot, "sigma_rdot");
    check(sigma_theta, "sigma_theta");
    check(T, "T");
}

TransitionMatrices transition_matrices(double T) {
    if (!(T > 0.0)) throw std::invalid_argument("transition_matrices: T must be > 0");
    TransitionMatrices tm;
    tm.F = Mat4::Identity();
    tm.F(0, 2) = T;
    tm.F(1, 3) = T;
    tm.G = Mat42::Zero();
    tm.G(0, 0) = T * T / 2.0;
    tm.G(1, 1) = T * T / 2.0;
    tm.G(2, 0) = T;
    tm.G(3, 1) = T;
    return tm;
}

Mat2 mode_noise_cov(const ModeDirection& mode, const NoiseConfig& cfg) {
    const double s = std::sin(mode.angle), c = std::cos(mode.angle);
    Mat2 rot;
    rot << s, c, -c, s;
    Mat2 diag = Mat2::Zero();
    diag(0, 0) = cfg.along() * cfg.along();
    diag(1, 1) = cfg.ortho() * cfg.ortho();
    return rot * diag * rot.transpose();
}

RangeMeasurement observe(const KinematicState& state, const Platform& platform) {
    const double xr = state.x - platform.x;
    const double yr = state.y - platform.y;
    const double zr = -platform.z;  // target on the ground plane
    const double r = std::sqrt(xr * xr + yr * yr + zr * zr);
    if (r <= 0.0) throw std::invalid_argument("observe: target coincides with the platform");
    const double vxr = state.vx - platform.vx;
    const double vyr = state.vy - platform.vy;
    return {r, (xr * vxr + yr * vyr) / r, std::atan2(xr, yr)};
}

ConvertedMeasurement convert_measurement(const Detection& d, const NoiseConfig& cfg) {
    if (d.is_miss) throw std::invalid_argument("convert_measurement: missed detection");
    const double zr = d.platform.z;
    const double rho2 = d.r * d.r - zr * zr;
    if (rho2 <= 0.0) throw std::invalid_argument("convert_measurement: range below platform altitude");
    const double rho = std::sqrt(rho2);
    const double st = std::sin(d.theta), ct = std::cos(d.theta);

    ConvertedMeasurement out;
    out.z = Vec3(d.platform.x + rho * st, d.platform.y + rho * ct, d.rdot);

    // Range error propagated through the ground projection: d(rho)/dr = r/rho.
    const double sr = cfg.sigma_r * (d.r / rho);
    const double sr2 = sr * sr;
    const double rt2 = rho * rho * cfg.sigma_theta * cfg.sigma_theta;
    out.R = Mat3::Zero();
    out.R(0, 0) = rt2 * ct * ct + sr2 * st * st;
    out.R(1, 1) = rt2 * st * st + sr2 * ct * ct;
    out.R(0, 1) = out.R(1, 0) = (sr2 - rt2) * st * ct;
    out.R(2, 2) = cfg.sigma_rdot * cfg.sigma_rdot;
    return out;
}

Mat34 measurement_jacobian(const KinematicState& state, const Platform& platform) {
    const double xr = state.x - platform.x;
    const double yr = state.y - platform.y;
    const double zr = -platform.z;
    const double r = std::sqrt(xr * xr + yr * yr + zr * zr);
    if (r <= 0.0) throw std::invalid_argument("measurement_jacobian: zero range");
    const double vxr = state.vx - platform.vx;
    const double vyr = state.vy - platform.vy;
    const double rdot = (xr * vxr + yr * vyr) / r;

    Mat34 j = Mat34::Zero();
    j(0, 0) = 1.0;
    j(1, 1) = 1.0;
    j(2, 0) = vxr / r - rdot * xr / (r * r);
    j(2, 1) = vyr / r - rdot * yr / (r * r);
    j(2, 2) = xr / r;
    j(2, 3) = yr / r;
    return j;
}

Vec3 converted_prediction(const KinematicState& state, const Platform& platform) {
    const auto m = observe(state, platform);
    return {state.x, state.y, m.rdot};
}

// ---- stream formats ----------------------------------------------------------

std::string detection_to_json_line(const Detection& d) {
    nlohmann::json j;
    j["t"] = d.t;
    j["r"] = d.r;
    j["rdot"] = d.rdot;
    j["theta"] = d.theta;
    j["platform"] = {{"x", d.platform.x}, {"y", d.platform.y}, {"z", d.platform.z},
                     {"vx", d.platform.vx}, {"vy", d.platform.vy}};
    j["is_miss"] = d.is_miss;
    return j.dump();
}

Detection detection_from_json_line(const std::string& line) {
    Detection d;
    nlohmann::json j = nlohmann::json::parse(line);
    d.t = j.at("t").get<int>();
    d.r = j.at("r").get<double>();
    d.rdot = j.at("rdot").get<double>();
    d.theta = j.at("theta").get<double>();
    const auto& p = j.at("platform");
    d.platform = {p.at("x").get<double>(), p.at("y").get<double>(), p.at("z").get<double>(),
                  p.at("vx").get<double>(), p.at("vy").get<double>()};
    d.is_miss = j.at("is_miss").get<bool>();
    return d;
}

std::string detections_to_csv(const std::vector<Detection>& ds) {
    std::ostringstream os;
    os.precision(17);
    os << "t,r,rdot,theta,platform_x,platform_y,platform_z,platform_vx,platform_vy,is_miss\n";
    for (const auto& d : ds)
        os << d.t << ',' << d.r << ',' << d.rdot << ',' << d.theta << ',' << d.platform.x << ','
           << d.platform.y << ',' << d.platform.z << ',' << d.platform.vx << ',' << d.platform.vy
           << ',' << (d.is_miss ? 1 : 0) << "\n";
    return os.str();
}

std::vector<Detection> detections_from_csv(const std::string& text) {
    std::vector<Detection> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;  // header
        std::istringstream ls(line);
        std::string field;
        std::vector<double> vals;
        while (std::getline(ls, field, ',')) vals.push_back(std::stod(field));
        if (vals.size() != 10)
            throw std::runtime_error("detections csv line " + std::to_string(lineno) + ": expected 10 fields");
        Detection d;
        d.t = int(vals[0]);
        d.r = vals[1];
        d.rdot = vals[2];
        d.theta = vals[3];
        d.platform = {vals[4], vals[5], vals[6], vals[7], vals[8]};
        d.is_miss = vals[9] != 0.0;
        out.push_back(d);
    }
    return out;
}

std::vector<Detection> load_detections(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read detections: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv") return detections_from_csv(text);

    std::vector<Detection> out;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(detection_from_json_line(line));
        } catch (const std::exception& e) {
            throw std::runtime_error("detections line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

void save_detections_jsonl(const std::vector<Detection>& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write detections: " + path);
    for (const auto& d : ds) out << detection_to_json_line(d) << "\n";
}

}  // namespace syntrack
