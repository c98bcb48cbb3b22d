#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "syntrack/grammar.hpp"
#include "syntrack/kinematics.hpp"
#include "syntrack/random.hpp"

namespace syntrack {

struct ScenarioConfig {
    std::string grammar = "arc_ur";     // builtin name or grammar file path
    std::string modes;                  // explicit mode string; bypasses sampling when set
    double speed = 15.0;                // nominal target speed, m/s
    NoiseConfig noise;                  // includes the scan period T
    double p_detect = 1.0;  // continuous observation; lower it to exercise misses
    // Close abeam standoff: kilometer-scale ranges keep the converted
    // position noise small enough to separate 45-degree mode splits within a
    // few scans.
    Platform platform{-2000.0, -3000.0, 3000.0, 0.0, 100.0};
    std::uint64_t seed = 1;
    int scans_per_mode = 10;            // scans spanned by one grammar terminal
    enum class Steering { Hard, Soft } steer = Steering::Hard;
    int max_depth = 10000;              // derivation rewrite cap
    // Rejection bounds on sampled derivation length, in terminals.
    int min_terminals = 3;
    int max_terminals = 16;
    double start_x = 0.0, start_y = 0.0;
    double pincer_offset = 2500.0;      // lateral separation of the two pincer tracks
    bool allow_supercritical = false;   // requires the finite max_depth above

    void require_valid() const;
};

/// Leftmost stochastic derivation; throws SimulationError if the rewrite
/// count exceeds max_depth (expected only for supercritical grammars).
std::vector<std::string> sample_derivation(const Grammar& g, RandomStream& rng, int max_depth);

class SimulationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Ground truth for one target: one state per scan 0..n*scans_per_mode, with
/// each terminal spanning scans_per_mode propagation steps. Hard steering
/// rotates the velocity onto the mode direction at segment boundaries; soft
/// steering leaves direction changes to the mode-conditioned process noise.
std::vector<KinematicState> modes_to_trajectory(const std::vector<std::string>& modes,
                                                const ScenarioConfig& cfg, RandomStream& rng);

/// Noisy GMTI-style detections of the truth states from the constant-velocity
/// platform; each scan is replaced by a miss with probability 1 - p_detect.
std::vector<Detection> emit_detections(const std::vector<KinematicState>& truth,
                                       const ScenarioConfig& cfg, RandomStream& rng);

struct TruthTrack {
    std::string label;                    // pattern / grammar name
    std::vector<std::string> modes;       // sampled terminal string
    std::vector<std::string> scan_modes;  // per-scan mode, same length as states
    std::vector<KinematicState> states;
};

struct DetectionTruth {
    int detection = 0;
    int track = 0;
    int scan = 0;
};

struct SimulationResult {
    std::vector<Detection> detections;
    std::vector<TruthTrack> tracks;
    std::vector<DetectionTruth> detection_truth;
};

/// Single-target scenario: sample (or take) the mode string, build the truth
/// trajectory, and emit its detection stream. Deterministic in (seed, config).
SimulationResult simulate(const ScenarioConfig& cfg);

/// Two mirrored arcs (arc_ur on the left, arc_dr on the right) laterally
/// separated by pincer_offset, detections interleaved by scan with seeded
/// within-scan order and no track identity.
SimulationResult scenario_pincer(const ScenarioConfig& cfg);

std::string truth_to_json_string(const SimulationResult& sim);

}  // namespace syntrack
