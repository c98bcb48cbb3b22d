#pragma once

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "syntrack/grammar.hpp"
#include "syntrack/kinematics.hpp"
#include "syntrack/parser.hpp"
#include "syntrack/simulator.hpp"
#include "syntrack/tracker.hpp"

namespace syntrack {

struct ClassifierConfig {
    /// Pattern grammars to race against each other; empty means every builtin.
    std::vector<std::string> patterns;
    std::string nd_symbol = "nd";
    double nd_prob = 0.05;  // 0 disables the non-detection augmentation

    bool feedback = false;
    double feedback_weight = 0.5;
    /// Mix the feedback prior across patterns by posterior weight instead of
    /// taking the single best pattern's chart.
    bool feedback_mix_patterns = false;

    enum class Tracker { Imm, Pf } tracker = Tracker::Imm;
    ImmConfig imm;
    PfConfig pf;
    int pf_particles = 1000;
    std::uint64_t pf_seed = 1;
    NoiseConfig noise;

    /// Association gate scale; sized for the converted-measurement position
    /// noise at the default sensor geometry rather than the parser's 50 m
    /// anchor scale (a 2.5 degree azimuth error is hundreds of meters at
    /// kilometer ranges, so the gate distance f(d) = spawn_threshold sits
    /// near five sigma of it).
    SimilarityConfig association{500.0, 1.5, SimilarityConfig::Anchor::HighHigh};
    double spawn_threshold = 0.01;

    /// Completion-similarity inside the per-pattern charts. Off by default:
    /// association already enforces kinematic consistency per hypothesis, and
    /// at theta1-scale spans the factor suppresses nested patterns outright.
    SimilarityConfig chart_similarity{50.0, 1.5, SimilarityConfig::Anchor::Off};
    // Sized for tracker mis-streaks: a dozen scans of a misread mode cost the
    // true pattern state ~100 nats, and pruning it away is unrecoverable.
    double prune_offset = 200.0;  // nats, relative per scan set
    /// Optionally skip this many initial tracker outputs before the charts
    /// start consuming (settling noise, not syntax).
    int chart_warmup = 0;
};

struct TraceRow {
    int scan = 0;         // hypothesis-local parser scan index
    int detection_t = 0;  // stream scan time
    bool miss = false;
    std::map<std::string, double> log_prefix;  // -inf once a pattern chart died
    std::map<std::string, double> posterior;   // normalized over live patterns
    std::string map_label;
    KinematicState state;                   // combined tracker estimate
    std::map<std::string, double> mode_probs;
    double n_eff = 0.0;                     // particle filter runs only
    double covariance_trace = 0.0;          // position covariance trace
};

/// Per-scan pattern likelihoods for one track hypothesis.
struct PatternLikelihoodTrace {
    std::vector<TraceRow> rows;
};

/// One track under test: a tracker state plus one chart per pattern grammar.
struct TrackHypothesis {
    int id = 0;
    std::map<std::string, Chart> charts;
    std::optional<ImmBank> imm;
    std::optional<ParticleSet> pf;
    RandomStream pf_rng{0};
    KinematicState last_anchor;
    int local_scan = 0;
    bool alive = true;
    bool unparseable = false;
    PatternLikelihoodTrace trace;
};

/// MAP pattern from the final trace row; "unclassified" when every pattern
/// chart is dead. Ties break toward the lexicographically first name.
std::string classify_map(const PatternLikelihoodTrace& trace);

/// Multi-hypothesis syntactic filtering pipeline: associates detections to
/// hypotheses by kinematic similarity, spawns new hypotheses for detections
/// nothing can explain, and advances tracker + pattern charts per scan.
class Pipeline {
public:
    explicit Pipeline(ClassifierConfig cfg);

    const ClassifierConfig& config() const { return cfg_; }
    const std::vector<TrackHypothesis>& hypotheses() const { return hyps_; }

    /// Consume a whole time-sorted stream.
    void process(const std::vector<Detection>& stream);

    /// Consume the detections of one scan (arrival order preserved); alive
    /// hypotheses that received nothing take a predict-only miss step.
    void process_scan(int t, const std::vector<Detection>& detections);

    /// Tracker + every pattern chart advanced by one detection (or miss).
    void step(TrackHypothesis& h, const Detection& d);

    /// Best hypothesis index for the detection, or -1 to request a spawn.
    int associate(const Detection& d, const std::set<int>& exclude = {}) const;

    int spawn(const Detection& d);

private:
    std::map<std::string, double> feedback_prior(const TrackHypothesis& h) const;
    ChartOptions chart_options() const;

    ClassifierConfig cfg_;
    std::map<std::string, std::shared_ptr<const ParserTables>> tables_;
    std::vector<TrackHypothesis> hyps_;
    int next_id_ = 0;
};

struct HardParseResult {
    PatternLikelihoodTrace trace;
    std::map<std::string, Chart> charts;
    std::string map_label;
};

/// Tracker-bypassed classification of a hard terminal string: every pattern
/// chart scans the same symbols with unit probability, no pruning and no
/// similarity, and no prediction pass after the final symbol.
HardParseResult classify_hard_modes(const std::vector<std::string>& modes,
                                    const std::map<std::string, Grammar>& patterns);

std::string trace_to_csv(const std::vector<TrackHypothesis>& hyps);
std::string track_output_jsonl(const std::vector<TrackHypothesis>& hyps);

}  // namespace syntrack
