#include "syntrack/simulator.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>
#include <json.hpp>

namespace syntrack {

void ScenarioConfig::require_valid() const {
    if (!(p_detect > 0.0) || p_detect > 1.0)
        throw std::invalid_argument("ScenarioConfig: p_detect must be in (0, 1]");
    if (!(speed > 0.0)) throw std::invalid_argument("ScenarioConfig: speed must be > 0");
    if (max_depth < 1) throw std::invalid_argument("ScenarioConfig: max_depth must be >= 1");
    if (scans_per_mode < 1) throw std::invalid_argument("ScenarioConfig: scans_per_mode must be >= 1");
    if (min_terminals < 1 || max_terminals < min_terminals)
        throw std::invalid_argument("ScenarioConfig: bad derivation length bounds");
    if (!(noise.T > 0.0)) throw std::invalid_argument("ScenarioConfig: T must be > 0");
    if (noise.sigma_r < 0.0 || noise.sigma_rdot < 0.0 || noise.sigma_theta < 0.0 ||
        noise.sigma_along < 0.0 || noise.sigma_ortho < 0.0)
        throw std::invalid_argument("ScenarioConfig: negative noise std dev");
}

std::vector<std::string> sample_derivation(const Grammar& g, RandomStream& rng, int max_depth) {
    require_valid(g);
    std::vector<Symbol> form = {Symbol::nonterminal(g.start())};
    std::vector<std::string> yield;
    int rewrites = 0;
    std::vector<double> probs;
    while (!form.empty()) {
        // Leftmost: emit leading terminals, rewrite the first nonterminal.
        std::size_t i = 0;
        while (i < form.size() && form[i].kind == SymbolKind::Terminal) yield.push_back(form[i++].id);
        if (i == form.size()) break;
        if (++rewrites > max_depth)
            throw SimulationError("sample_derivation: rewrite cap exceeded (depth " +
                                  std::to_string(max_depth) + ")");
        const auto& rules = g.productions_of(form[i].id);
        probs.clear();
        for (int r : rules) probs.push_back(g.productions()[r].prob);
        const auto& chosen = g.productions()[rules[rng.discrete(probs)]];
        std::vector<Symbol> next(form.begin() + i + 1, form.end());
        form.assign(chosen.rhs.begin(), chosen.rhs.end());
        form.insert(form.end(), next.begin(), next.end());
    }
    return yield;
}

std::vector<KinematicState> modes_to_trajectory(const std::vector<std::string>& modes,
                                                const ScenarioConfig& cfg, RandomStream& rng) {
    if (modes.empty()) throw std::invalid_argument("modes_to_trajectory: empty mode string");
    const auto tm = transition_matrices(cfg.noise.T);
    const int spm = cfg.scans_per_mode;
    const int steps = int(modes.size()) * spm;

    std::vector<Eigen::LLT<Mat2>> chol;
    chol.reserve(modes.size());
    for (const auto& m : modes) chol.emplace_back(mode_noise_cov(mode_direction(m), cfg.noise));

    std::vector<KinematicState> truth;
    truth.reserve(steps + 1);
    Vec4 x;
    x << cfg.start_x, cfg.start_y, cfg.speed * mode_direction(modes[0]).unit();
    truth.push_back(KinematicState::from_vec(x, Mat4::Zero(), 0));

    for (int k = 1; k <= steps; ++k) {
        const int seg = (k - 1) / spm;
        if (cfg.steer == ScenarioConfig::Steering::Hard && (k - 1) % spm == 0) {
            const double speed = x.tail<2>().norm();
            x.tail<2>() = speed * mode_direction(modes[seg]).unit();
        }
        x = tm.F * x;
        const Vec2 v(rng.normal(), rng.normal());
        x += tm.G * (chol[seg].matrixL() * v);
        truth.push_back(KinematicState::from_vec(x, Mat4::Zero(), k));
    }
    return truth;
}

std::vector<Detection> emit_detections(const std::vector<KinematicState>& truth,
                                       const ScenarioConfig& cfg, RandomStream& rng) {
    std::vector<Detection> out;
    out.reserve(truth.size());
    for (const auto& state : truth) {
        const Platform platform = cfg.platform.at_time(state.t * cfg.noise.T);
        Detection d;
        d.t = state.t;
        d.platform = platform;
        if (rng.uniform() >= cfg.p_detect) {
            d.is_miss = true;
        } else {
            const auto m = observe(state, platform);
            d.r = m.r + rng.normal(0.0, cfg.noise.sigma_r);
            d.rdot = m.rdot + rng.normal(0.0, cfg.noise.sigma_rdot);
            d.theta = m.theta + rng.normal(0.0, cfg.noise.sigma_theta);
            if (d.theta > M_PI) d.theta -= 2.0 * M_PI;
            if (d.theta <= -M_PI) d.theta += 2.0 * M_PI;
        }
        out.push_back(d);
    }
    return out;
}

namespace {

std::vector<std::string> scenario_modes(const ScenarioConfig& cfg, const Grammar& g,
                                        RandomStream& rng) {
    if (!cfg.modes.empty()) {
        auto modes = split_terminal_string(cfg.modes);
        for (const auto& m : modes)
            if (!g.is_terminal(m))
                throw std::invalid_argument("scenario modes: terminal not in grammar: " + m);
        return modes;
    }
    const auto wp = is_well_posed(g);
    if (!wp.subcritical && !cfg.allow_supercritical)
        throw SimulationError("grammar is not subcritical (radius " + std::to_string(wp.radius) +
                              "); set allow_supercritical with a depth cap to sample anyway");
    for (int attempt = 0; attempt < 1000; ++attempt) {
        try {
            auto modes = sample_derivation(g, rng, cfg.max_depth);
            if (int(modes.size()) >= cfg.min_terminals && int(modes.size()) <= cfg.max_terminals)
                return modes;
        } catch (const SimulationError&) {
            // Depth-capped draw; rejected like an out-of-bounds length.
            if (!cfg.allow_supercritical) throw;
        }
    }
    throw SimulationError("scenario modes: no derivation within the length bounds after 1000 draws");
}

TruthTrack make_track(const std::string& label, std::vector<std::string> modes,
                      std::vector<KinematicState> states, int spm) {
    TruthTrack t;
    t.label = label;
    t.scan_modes.reserve(states.size());
    for (std::size_t k = 0; k < states.size(); ++k) {
        const int seg = k == 0 ? 0 : int((k - 1) / spm);
        t.scan_modes.push_back(modes[std::min<std::size_t>(seg, modes.size() - 1)]);
    }
    t.modes = std::move(modes);
    t.states = std::move(states);
    return t;
}

}  // namespace

SimulationResult simulate(const ScenarioConfig& cfg) {
    cfg.require_valid();
    const Grammar g = load_grammar(cfg.grammar);
    RandomStream rng(cfg.seed);

    SimulationResult sim;
    auto modes = scenario_modes(cfg, g, rng);
    auto truth = modes_to_trajectory(modes, cfg, rng);
    sim.detections = emit_detections(truth, cfg, rng);
    sim.tracks.push_back(make_track(cfg.grammar, std::move(modes), std::move(truth), cfg.scans_per_mode));
    for (std::size_t i = 0; i < sim.detections.size(); ++i)
        sim.detection_truth.push_back({int(i), 0, sim.detections[i].t});
    return sim;
}

SimulationResult scenario_pincer(const ScenarioConfig& cfg) {
    cfg.require_valid();
    RandomStream rng(cfg.seed);
    const auto patterns = builtin_patterns();

    SimulationResult sim;
    std::array<std::vector<Detection>, 2> streams;
    const char* names[2] = {"arc_ur", "arc_dr"};
    for (int side = 0; side < 2; ++side) {
        ScenarioConfig side_cfg = cfg;
        side_cfg.grammar = names[side];
        side_cfg.start_x = cfg.start_x + (side == 0 ? -0.5 : 0.5) * cfg.pincer_offset;
        const Grammar& g = patterns.at(names[side]);
        auto modes = scenario_modes(side_cfg, g, rng);
        auto truth = modes_to_trajectory(modes, side_cfg, rng);
        streams[side] = emit_detections(truth, side_cfg, rng);
        sim.tracks.push_back(make_track(names[side], std::move(modes), std::move(truth),
                                        cfg.scans_per_mode));
    }

    // Merge by scan; within a scan the arrival order is a seeded coin flip, so
    // the stream is interleaved and out of track order.
    const int scans = std::max(int(streams[0].size()), int(streams[1].size()));
    for (int t = 0; t < scans; ++t) {
        std::vector<int> order = {0, 1};
        if (rng.uniform() < 0.5) std::swap(order[0], order[1]);
        for (int side : order) {
            if (t >= int(streams[side].size())) continue;
            sim.detection_truth.push_back({int(sim.detections.size()), side, t});
            sim.detections.push_back(streams[side][t]);
        }
    }
    return sim;
}

std::string truth_to_json_string(const SimulationResult& sim) {
    nlohmann::json j;
    auto& tracks = j["tracks"] = nlohmann::json::array();
    for (const auto& t : sim.tracks) {
        nlohmann::json jt;
        jt["label"] = t.label;
        jt["modes"] = t.modes;
        jt["scan_modes"] = t.scan_modes;
        auto& states = jt["states"] = nlohmann::json::array();
        for (const auto& s : t.states)
            states.push_back({{"t", s.t}, {"x", s.x}, {"y", s.y}, {"vx", s.vx}, {"vy", s.vy}});
        tracks.push_back(std::move(jt));
    }
    auto& dt = j["detection_truth"] = nlohmann::json::array();
    for (const auto& d : sim.detection_truth)
        dt.push_back({{"detection", d.detection}, {"track", d.track}, {"scan", d.scan}});
    return j.dump(2) + "\n";
}

}  // namespace syntrack
