#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "syntrack/grammar.hpp"
#include "syntrack/kinematics.hpp"
#include "syntrack/logprob.hpp"

namespace syntrack {

/// Per-scan parser input: a probability distribution over terminals plus the
/// kinematic estimate attached to the scan. Terminal ids not in the grammar
/// simply match no rule. A missed detection carries full mass on the
/// non-detection terminal of an augmented grammar.
struct SoftTerminal {
    std::map<std::string, double> dist;
    KinematicState kinematic;
    int scan_index = 0;

    static SoftTerminal hard(std::string terminal, int scan_index, KinematicState k = {});
};

/// Spatial consistency factor f(d) = exp(-(d/theta1)^theta2) used by the
/// completion step and by track association.
struct SimilarityConfig {
    double theta1 = 50.0;  // meters
    double theta2 = 1.5;   // in (0, 2]
    /// Which anchors the completion compares: both "high" marks as published,
    /// or the pending high against the finished low (adjacent spans), or
    /// disabled entirely (f = 1).
    enum class Anchor { Off, HighHigh, HighLow } anchor = Anchor::HighHigh;

    void require_valid() const;
};

double similarity(double distance, const SimilarityConfig& cfg);

/// Left-corner and unit-production closures plus rule lookkeeping shared by
/// every chart over the same grammar. Immutable once built.
class ParserTables {
public:
    explicit ParserTables(Grammar grammar);

    const Grammar& grammar() const { return grammar_; }
    const Eigen::MatrixXd& left_corner_closure() const { return r_left_; }
    const Eigen::MatrixXd& unit_closure() const { return r_unit_; }

    bool is_unit_rule(int rule) const { return unit_rule_[rule]; }
    /// Max-product unit-chain weight from Z to Y (1 on the diagonal).
    double unit_chain_max(int z, int y) const { return unit_max_(z, y); }
    /// First rule on the best unit chain from Z to Y, -1 if none is needed.
    int unit_chain_step(int z, int y) const { return unit_next_[z][y]; }

private:
    Grammar grammar_;
    Eigen::MatrixXd r_left_;
    Eigen::MatrixXd r_unit_;
    Eigen::MatrixXd unit_max_;
    std::vector<std::vector<int>> unit_next_;
    std::vector<bool> unit_rule_;
};

std::shared_ptr<const ParserTables> make_parser_tables(const Grammar& grammar);

enum class StateOrigin { Init, Predict, Scan, Complete };

struct StateRef {
    int set = -1;
    int pos = -1;
    bool valid() const { return set >= 0; }
};

/// Dotted production spanning scans [start, end) with forward (alpha), inner
/// (gamma) and Viterbi log-probabilities and the low/high kinematic anchors.
/// rule == -1 denotes the dummy start item whose right-hand side is [S].
struct ParserState {
    int end = 0;
    int start = 0;
    int rule = -1;
    int dot = 0;
    StateOrigin origin = StateOrigin::Init;
    double alpha = kLogZero;
    double gamma = kLogZero;
    double viterbi = kLogZero;
    KinematicState low, high;
    bool alive = true;
    // Viterbi backpointers.
    StateRef bp_parent;    // scan: predecessor; completion: pending state
    StateRef bp_finished;  // completion only
};

struct ChartOptions {
    /// Relative pruning offset in nats: states whose forward log-probability
    /// falls more than this below the best state of the same scan set are
    /// dropped. Infinity disables pruning.
    double prune_offset = std::numeric_limits<double>::infinity();
    SimilarityConfig similarity;
};

/// Earley chart advanced scan by scan: one state set per scan index,
/// deduplicated by (start, rule, dot) with probabilities merged on the fly.
/// Single writer; charts over the same grammar share their ParserTables.
class Chart {
public:
    Chart(std::shared_ptr<const ParserTables> tables, ChartOptions options = {});

    const ParserTables& tables() const { return *tables_; }
    const Grammar& grammar() const { return tables_->grammar(); }
    const ChartOptions& options() const { return options_; }

    int frontier() const { return int(sets_.size()) - 1; }
    const std::vector<ParserState>& set(int k) const { return sets_.at(k).states; }
    const KinematicState& anchor(int k) const { return anchors_.at(k); }

    /// Next symbol of a state, nullptr when the dot is at the end.
    const Symbol* next_symbol(const ParserState& s) const;
    const std::vector<Symbol>& rhs_of(const ParserState& s) const;
    std::string lhs_of(const ParserState& s) const;

    bool dead() const { return dead_; }
    void mark_dead() { dead_ = true; }

private:
    friend Chart init_chart(std::shared_ptr<const ParserTables>, const KinematicState&, ChartOptions);
    friend void predict(Chart&, int, double, const KinematicState*);
    friend void scan(Chart&, const SoftTerminal&);
    friend void complete(Chart&, int, const SimilarityConfig&, double);

    struct StateSet {
        std::vector<ParserState> states;
        std::map<std::tuple<int, int, int>, int> index;  // (start, rule, dot) -> pos
        bool predicted = false;
    };

    int add_or_merge(int k, ParserState s);
    void prune_set(int k, StateOrigin origin, double offset);

    std::shared_ptr<const ParserTables> tables_;
    ChartOptions options_;
    std::vector<StateSet> sets_;
    std::vector<KinematicState> anchors_;
    std::vector<Symbol> dummy_rhs_;
    bool dead_ = false;
};

/// Chart holding the dummy start state anchored at the given kinematic
/// estimate, with the scan-0 prediction pass already applied.
Chart init_chart(std::shared_ptr<const ParserTables> tables, const KinematicState& anchor,
                 ChartOptions options = {});

/// Prediction pass at scan k. Runs once per scan index; when dummy_anchor is
/// given a fresh start item k: _k -> .S is inserted first (mid-stream track
/// initiation).
void predict(Chart& chart, int k, double prune_offset,
             const KinematicState* dummy_anchor = nullptr);

/// Scanning pass: consumes the input at the chart frontier and creates the
/// next state set.
void scan(Chart& chart, const SoftTerminal& input);

/// Completion pass at scan k, iterated to its fixed point.
void complete(Chart& chart, int k, const SimilarityConfig& sim, double prune_offset);

/// scan + complete + predict with the chart's own options.
void advance(Chart& chart, const SoftTerminal& input);

/// Sum of forward probabilities over the scan-k states that just consumed the
/// scan-k terminal; 1 for k = 0, 0 when every hypothesis died.
double prefix_probability(const Chart& chart, int k);
double log_prefix_probability(const Chart& chart, int k);

/// Probability that the whole input so far is a complete sentence, read from
/// the completed dummy state; 0 if there is none.
double sentence_probability(const Chart& chart);
double log_sentence_probability(const Chart& chart);

/// Predictive distribution over the next terminal given the parsed prefix,
/// restricted to `support` (the grammar's terminals when empty). Falls back
/// to uniform when the chart carries no mass.
std::map<std::string, double> next_terminal_distribution(const Chart& chart, int k,
                                                         const std::vector<std::string>& support = {});

struct ParseNode {
    std::string symbol;
    int rule = -1;  // -1 for terminal leaves
    int span_start = 0;
    int span_end = 0;
    std::vector<ParseNode> children;
};

struct ParseTree {
    ParseNode root;
    double log_prob = kLogZero;
};

/// Most likely parse of the full input, from the max-product chart values and
/// backpointers. Ties are broken toward the earliest grammar rule. Empty when
/// no complete parse exists.
std::optional<ParseTree> viterbi_parse(const Chart& chart);

std::string parse_tree_text(const ParseNode& node);
std::string parse_tree_json_string(const ParseTree& tree);

/// JSON-lines dump, one line per live state with linear and log
/// probabilities; used for golden-chart comparisons.
std::string dump_chart(const Chart& chart);

}  // namespace syntrack
