#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "syntrack/simulator.hpp"

using namespace syntrack;
namespace to = syntrack::testing;

TEST_CASE("deterministic rule always yields its terminal") {
    Grammar g({"a"}, {"S"}, {{"S", {Symbol::terminal("a")}, 1.0}}, "S");
    for (int seed = 0; seed < 10; ++seed) {
        RandomStream rng(seed);
        CHECK(sample_derivation(g, rng, 100) == std::vector<std::string>{"a"});
    }
}

TEST_CASE("sampled arc derivations stay in the arc language") {
    const Grammar arc = builtin_patterns().at("arc_ur");
    RandomStream rng(11);
    for (int i = 0; i < 5000; ++i) {
        const auto s = sample_derivation(arc, rng, 100000);
        INFO(i);
        CHECK(to::is_arc_string(s, "a", "b", "c"));
    }
    const Grammar mrect = builtin_patterns().at("mrect_cl");
    for (int i = 0; i < 5000; ++i) {
        const auto s = sample_derivation(mrect, rng, 100000);
        CHECK(to::is_mrect_string(s, "b", "d", "f", "h"));
    }
}

TEST_CASE("supercritical sampling hits the depth cap") {
    Grammar super({"a"}, {"S"},
                  {{"S", {Symbol::nonterminal("S"), Symbol::nonterminal("S")}, 0.9},
                   {"S", {Symbol::terminal("a")}, 0.1}},
                  "S");
    RandomStream rng(1);
    bool capped = false;
    for (int i = 0; i < 50 && !capped; ++i) {
        try {
            (void)sample_derivation(super, rng, 200);
        } catch (const SimulationError&) {
            capped = true;
        }
    }
    CHECK(capped);
}

TEST_CASE("straight northward track from mode b") {
    ScenarioConfig cfg;
    cfg.noise.sigma_along = 0.0;
    cfg.noise.sigma_ortho = 0.0;
    cfg.scans_per_mode = 10;
    RandomStream rng(5);
    const auto truth = modes_to_trajectory({"b", "b", "b", "b"}, cfg, rng);
    REQUIRE(truth.size() == 41);
    for (std::size_t k = 1; k < truth.size(); ++k) {
        CHECK(truth[k].y > truth[k - 1].y);
        CHECK(truth[k].x == doctest::Approx(0.0).epsilon(1e-9));
    }
    CHECK(truth.back().y == doctest::Approx(40.0 * cfg.speed).epsilon(1e-9));
}

TEST_CASE("hard steering mirrors the heading over an arc") {
    ScenarioConfig cfg;
    cfg.noise.sigma_along = 0.0;
    cfg.noise.sigma_ortho = 0.0;
    RandomStream rng(5);
    const auto truth = modes_to_trajectory({"a", "a", "c", "c"}, cfg, rng);
    const auto heading = [](const KinematicState& s) { return std::atan2(s.vy, s.vx); };
    CHECK(heading(truth[1]) == doctest::Approx(M_PI / 4.0));          // mode a
    CHECK(heading(truth.back()) == doctest::Approx(3.0 * M_PI / 4.0)); // mode c mirrors it
    CHECK(truth.back().vy > 0.0);
}

TEST_CASE("one-step increments match the process noise covariance") {
    ScenarioConfig cfg;
    cfg.speed = 10.0;
    cfg.scans_per_mode = 1;
    RandomStream rng(2025);
    const auto tm = transition_matrices(cfg.noise.T);
    const Mat2 q = mode_noise_cov(mode_direction("b"), cfg.noise);
    const Mat4 gqg = tm.G * q * tm.G.transpose();

    Mat4 sum = Mat4::Zero();
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        const auto t = modes_to_trajectory({"b"}, cfg, rng);
        const Vec4 inc = t[1].vec() - tm.F * t[0].vec();
        sum += inc * inc.transpose();
    }
    sum /= trials;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            if (std::abs(gqg(r, c)) > 1e-12)
                CHECK(sum(r, c) == doctest::Approx(gqg(r, c)).epsilon(0.05));
}

TEST_CASE("noise-free detections reproduce observe exactly") {
    ScenarioConfig cfg;
    cfg.modes = "bb";
    cfg.p_detect = 1.0;
    cfg.noise.sigma_r = 0.0;
    cfg.noise.sigma_rdot = 0.0;
    cfg.noise.sigma_theta = 0.0;
    cfg.noise.sigma_along = 0.0;
    cfg.noise.sigma_ortho = 0.0;
    const auto sim = simulate(cfg);
    REQUIRE(sim.tracks.size() == 1);
    for (std::size_t k = 0; k < sim.detections.size(); ++k) {
        const auto& d = sim.detections[k];
        REQUIRE_FALSE(d.is_miss);
        const auto m = observe(sim.tracks[0].states[k], d.platform);
        CHECK(d.r == doctest::Approx(m.r).epsilon(1e-12));
        CHECK(d.rdot == doctest::Approx(m.rdot).epsilon(1e-12));
        CHECK(d.theta == doctest::Approx(m.theta).epsilon(1e-12));
    }
}

TEST_CASE("miss fraction follows p_detect") {
    ScenarioConfig cfg;
    cfg.p_detect = 0.8;
    RandomStream rng(31);
    std::vector<KinematicState> truth;
    for (int k = 0; k < 10000; ++k) {
        KinematicState s;
        s.y = 5000.0;
        s.t = k;
        truth.push_back(s);
    }
    const auto ds = emit_detections(truth, cfg, rng);
    int misses = 0;
    for (const auto& d : ds) misses += d.is_miss;
    CHECK(double(misses) / ds.size() == doctest::Approx(0.2).epsilon(0.05));
}

TEST_CASE("range residual standard deviation matches sigma_r") {
    ScenarioConfig cfg;
    cfg.p_detect = 1.0;
    RandomStream rng(8);
    std::vector<KinematicState> truth;
    for (int k = 0; k < 20000; ++k) {
        KinematicState s;
        s.y = 5000.0;
        s.t = k;
        truth.push_back(s);
    }
    ScenarioConfig fixed = cfg;
    fixed.platform.vx = fixed.platform.vy = 0.0;  // keep geometry constant
    const auto ds = emit_detections(truth, fixed, rng);
    const auto clean = observe(truth[0], fixed.platform);
    double ss = 0.0;
    for (const auto& d : ds) ss += (d.r - clean.r) * (d.r - clean.r);
    CHECK(std::sqrt(ss / ds.size()) == doctest::Approx(cfg.noise.sigma_r).epsilon(0.03));
}

TEST_CASE("simulation replay is bit-identical") {
    ScenarioConfig cfg;
    cfg.grammar = "arc_ur";
    cfg.seed = 7;
    const auto a = simulate(cfg);
    const auto b = simulate(cfg);
    REQUIRE(a.detections.size() == b.detections.size());
    for (std::size_t i = 0; i < a.detections.size(); ++i) {
        CHECK(detection_to_json_line(a.detections[i]) == detection_to_json_line(b.detections[i]));
    }
    CHECK(truth_to_json_string(a) == truth_to_json_string(b));
}

TEST_CASE("every detection index maps to exactly one truth state") {
    ScenarioConfig cfg;
    cfg.seed = 12;
    const auto sim = simulate(cfg);
    REQUIRE(sim.detection_truth.size() == sim.detections.size());
    for (const auto& dt : sim.detection_truth) {
        CHECK(dt.track == 0);
        CHECK(dt.scan == sim.detections[dt.detection].t);
        CHECK(dt.scan < int(sim.tracks[0].states.size()));
    }
}

TEST_CASE("supercritical scenario needs the explicit opt-in") {
    ScenarioConfig cfg;
    cfg.grammar = "supercritical.scfg";
    // Inline grammar written to a temp file.
    const std::string path = "/tmp/syntrack_test_super.scfg";
    {
        std::ofstream out(path);
        out << "%terminals a\n%nonterminals S\n%start S\n"
               "S -> S S @ 0.6\nS -> a @ 0.4\n";
    }
    cfg.grammar = path;
    CHECK_THROWS_AS(simulate(cfg), SimulationError);
    cfg.allow_supercritical = true;
    cfg.max_depth = 500;
    cfg.max_terminals = 400;
    CHECK_NOTHROW(simulate(cfg));
}

TEST_CASE("pincer scenario: two labeled arcs, sorted interleaved stream") {
    ScenarioConfig cfg;
    cfg.seed = 21;
    cfg.max_terminals = 8;
    const auto sim = scenario_pincer(cfg);
    REQUIRE(sim.tracks.size() == 2);
    CHECK(sim.tracks[0].label == "arc_ur");
    CHECK(sim.tracks[1].label == "arc_dr");
    CHECK(to::is_arc_string(sim.tracks[0].modes, "a", "b", "c"));
    CHECK(to::is_arc_string(sim.tracks[1].modes, "c", "b", "a"));

    int prev_t = -1;
    for (const auto& d : sim.detections) {
        CHECK(d.t >= prev_t);
        prev_t = d.t;
    }
    // Both tracks appear, identity only via the sidecar.
    std::set<int> tracks;
    for (const auto& dt : sim.detection_truth) tracks.insert(dt.track);
    CHECK(tracks == std::set<int>{0, 1});
}
