#include "syntrack/parser.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace syntrack {

SoftTerminal SoftTerminal::hard(std::string terminal, int scan_index, KinematicState k) {
    SoftTerminal st;
    st.dist[std::move(terminal)] = 1.0;
    st.kinematic = k;
    st.kinematic.t = scan_index;
    st.scan_index = scan_index;
    return st;
}

void SimilarityConfig::require_valid() const {
    if (!(theta1 > 0.0)) throw std::invalid_argument("SimilarityConfig: theta1 must be > 0");
    if (!(theta2 > 0.0) || theta2 > 2.0)
        throw std::invalid_argument("SimilarityConfig: theta2 must be in (0, 2]");
}

double similarity(double distance, const SimilarityConfig& cfg) {
    cfg.require_valid();
    if (distance < 0.0) throw std::invalid_argument("similarity: negative distance");
    return std::exp(-std::pow(distance / cfg.theta1, cfg.theta2));
}

namespace {

Eigen::MatrixXd invert_i_minus(const Eigen::MatrixXd& p, const char* what) {
    const int n = int(p.rows());
    Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n) - p;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    if (!lu.isInvertible())
        throw GrammarError(std::string("closure ") + what +
                           ": I - P is singular (probability-1 left-recursive or unit cycle)");
    return lu.inverse();
}

}  // namespace

ParserTables::ParserTables(Grammar grammar) : grammar_(std::move(grammar)) {
    require_valid(grammar_);
    const int n = int(grammar_.nonterminals().size());
    const auto& rules = grammar_.productions();

    Eigen::MatrixXd p_left = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd p_unit = Eigen::MatrixXd::Zero(n, n);
    unit_rule_.assign(rules.size(), false);

    // Best single unit edge and the rule realizing it, for Viterbi chains.
    Eigen::MatrixXd edge = Eigen::MatrixXd::Zero(n, n);
    std::vector<std::vector<int>> edge_rule(n, std::vector<int>(n, -1));

    for (std::size_t r = 0; r < rules.size(); ++r) {
        const auto& p = rules[r];
        const int lhs = grammar_.nonterminal_index(p.lhs);
        if (p.rhs.front().kind == SymbolKind::Nonterminal)
            p_left(lhs, grammar_.nonterminal_index(p.rhs.front().id)) += p.prob;
        if (p.rhs.size() == 1 && p.rhs[0].kind == SymbolKind::Nonterminal) {
            unit_rule_[r] = true;
            const int rhs = grammar_.nonterminal_index(p.rhs[0].id);
            p_unit(lhs, rhs) += p.prob;
            if (p.prob > edge(lhs, rhs)) {
                edge(lhs, rhs) = p.prob;
                edge_rule[lhs][rhs] = int(r);
            }
        }
    }

    r_left_ = invert_i_minus(p_left, "R_L");
    r_unit_ = invert_i_minus(p_unit, "R_U");

    // Max-product closure of unit chains. Probabilities are <= 1 so the best
    // chain is simple; n-1 relaxation rounds suffice.
    unit_max_ = Eigen::MatrixXd::Identity(n, n);
    unit_next_.assign(n, std::vector<int>(n, -1));
    for (int round = 0; round < std::max(1, n - 1); ++round) {
        bool changed = false;
        for (int z = 0; z < n; ++z)
            for (int w = 0; w < n; ++w) {
                if (edge(z, w) == 0.0) continue;
                for (int y = 0; y < n; ++y) {
                    const double cand = edge(z, w) * unit_max_(w, y);
                    if (cand > unit_max_(z, y)) {
                        unit_max_(z, y) = cand;
                        unit_next_[z][y] = edge_rule[z][w];
                        changed = true;
                    }
                }
            }
        if (!changed) break;
    }
}

std::shared_ptr<const ParserTables> make_parser_tables(const Grammar& grammar) {
    return std::make_shared<const ParserTables>(grammar);
}

// ---- chart ------------------------------------------------------------------

Chart::Chart(std::shared_ptr<const ParserTables> tables, ChartOptions options)
    : tables_(std::move(tables)), options_(options) {
    options_.similarity.require_valid();
    dummy_rhs_ = {Symbol::nonterminal(tables_->grammar().start())};
}

const std::vector<Symbol>& Chart::rhs_of(const ParserState& s) const {
    return s.rule < 0 ? dummy_rhs_ : tables_->grammar().productions()[s.rule].rhs;
}

std::string Chart::lhs_of(const ParserState& s) const {
    return s.rule < 0 ? "_" : tables_->grammar().productions()[s.rule].lhs;
}

const Symbol* Chart::next_symbol(const ParserState& s) const {
    const auto& rhs = rhs_of(s);
    return s.dot < int(rhs.size()) ? &rhs[s.dot] : nullptr;
}

int Chart::add_or_merge(int k, ParserState s) {
    auto& set = sets_[k];
    const auto key = std::make_tuple(s.start, s.rule, s.dot);
    auto it = set.index.find(key);
    if (it == set.index.end()) {
        set.states.push_back(std::move(s));
        set.index.emplace(key, int(set.states.size()) - 1);
        return int(set.states.size()) - 1;
    }
    ParserState& dst = set.states[it->second];
    dst.alpha = log_add(dst.alpha, s.alpha);
    dst.gamma = log_add(dst.gamma, s.gamma);
    if (s.viterbi > dst.viterbi) {
        dst.viterbi = s.viterbi;
        dst.bp_parent = s.bp_parent;
        dst.bp_finished = s.bp_finished;
    }
    dst.alive = true;
    return it->second;
}

void Chart::prune_set(int k, StateOrigin origin, double offset) {
    if (std::isinf(offset)) return;
    auto& set = sets_[k];
    double best = kLogZero;
    for (const auto& s : set.states)
        if (s.alive) best = std::max(best, s.alpha);
    if (best == kLogZero) return;
    for (auto& s : set.states)
        if (s.alive && s.origin == origin && s.alpha < best - offset) s.alive = false;
}

Chart init_chart(std::shared_ptr<const ParserTables> tables, const KinematicState& anchor,
                 ChartOptions options) {
    Chart chart(std::move(tables), options);
    chart.sets_.emplace_back();
    chart.anchors_.push_back(anchor);
    ParserState dummy;
    dummy.end = 0;
    dummy.alpha = dummy.gamma = dummy.viterbi = 0.0;  // log 1
    dummy.low = dummy.high = anchor;
    chart.add_or_merge(0, dummy);
    predict(chart, 0, chart.options_.prune_offset);
    return chart;
}

void predict(Chart& chart, int k, double prune_offset, const KinematicState* dummy_anchor) {
    if (k != chart.frontier()) throw std::logic_error("predict: k is not the chart frontier");
    auto& set = chart.sets_[k];
    if (set.predicted) throw std::logic_error("predict: already predicted at this scan");
    set.predicted = true;

    if (dummy_anchor) {
        ParserState dummy;
        dummy.end = dummy.start = k;
        dummy.alpha = dummy.gamma = dummy.viterbi = 0.0;
        dummy.low = dummy.high = *dummy_anchor;
        chart.add_or_merge(k, dummy);
    }

    const auto& g = chart.grammar();
    const auto& r_left = chart.tables().left_corner_closure();
    const int n = int(g.nonterminals().size());

    // Forward mass waiting on each nonterminal, from non-predicted states.
    std::vector<double> z_mass(n, kLogZero);
    bool any = false;
    for (const auto& s : set.states) {
        if (!s.alive || s.origin == StateOrigin::Predict) continue;
        const Symbol* sym = chart.next_symbol(s);
        if (sym && sym->kind == SymbolKind::Nonterminal) {
            z_mass[g.nonterminal_index(sym->id)] = log_add(z_mass[g.nonterminal_index(sym->id)], s.alpha);
            any = true;
        }
    }
    if (!any) return;

    const KinematicState& anchor = chart.anchors_[k];
    for (int y = 0; y < n; ++y) {
        double mass = kLogZero;
        for (int z = 0; z < n; ++z)
            if (z_mass[z] != kLogZero && r_left(z, y) > 0.0)
                mass = log_add(mass, z_mass[z] + std::log(r_left(z, y)));
        if (mass == kLogZero) continue;
        for (int r : g.productions_of(y)) {
            const double logp = std::log(g.productions()[r].prob);
            ParserState s;
            s.end = s.start = k;
            s.rule = r;
            s.dot = 0;
            s.origin = StateOrigin::Predict;
            s.alpha = mass + logp;
            s.gamma = logp;
            s.viterbi = logp;
            s.low = s.high = anchor;
            chart.add_or_merge(k, std::move(s));
        }
    }
    chart.prune_set(k, StateOrigin::Predict, prune_offset);
}

void scan(Chart& chart, const SoftTerminal& input) {
    const int k = chart.frontier();
    if (input.scan_index != k)
        throw std::logic_error("scan: input scan index does not match the chart frontier");
    double total = 0.0;
    for (const auto& [t, p] : input.dist) {
        if (p < 0.0) throw std::invalid_argument("scan: negative terminal probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument("scan: terminal distribution does not sum to 1");

    chart.sets_.emplace_back();
    chart.anchors_.push_back(input.kinematic);

    const auto& src = chart.sets_[k].states;
    bool advanced = false;
    for (int pos = 0; pos < int(src.size()); ++pos) {
        const ParserState& s = src[pos];
        if (!s.alive) continue;
        const Symbol* sym = chart.next_symbol(s);
        if (!sym || sym->kind != SymbolKind::Terminal) continue;
        auto it = input.dist.find(sym->id);
        if (it == input.dist.end() || it->second <= 0.0) continue;
        const double logp = std::log(it->second);
        ParserState next = s;
        next.end = k + 1;
        next.dot = s.dot + 1;
        next.origin = StateOrigin::Scan;
        next.alpha = s.alpha + logp;
        next.gamma = s.gamma + logp;
        next.viterbi = s.viterbi + logp;
        next.high = input.kinematic;
        next.bp_parent = {k, pos};
        next.bp_finished = {};
        chart.add_or_merge(k + 1, std::move(next));
        advanced = true;
    }
    if (!advanced) chart.mark_dead();
}

void complete(Chart& chart, int k, const SimilarityConfig& sim, double prune_offset) {
    if (k != chart.frontier()) throw std::logic_error("complete: k is not the chart frontier");
    const auto& g = chart.grammar();
    const auto& tables = chart.tables();
    const auto& r_unit = tables.unit_closure();

    // Finished non-unit states fire, grouped by start index in descending
    // order so every state's probability is final before it propagates. Unit
    // completions are folded into R_U and never fire on their own.
    for (int j = k - 1; j >= 0; --j) {
        auto& set_k = chart.sets_[k];
        for (int fpos = 0; fpos < int(set_k.states.size()); ++fpos) {
            // Indexing anew each round: completions may append to the vector.
            const ParserState finished = chart.sets_[k].states[fpos];
            if (!finished.alive || finished.start != j) continue;
            if (finished.rule < 0 || tables.is_unit_rule(finished.rule)) continue;
            if (chart.next_symbol(finished) != nullptr) continue;  // dot not at end
            const int y = g.nonterminal_index(g.productions()[finished.rule].lhs);

            const auto& pendings = chart.sets_[j].states;
            for (int ppos = 0; ppos < int(pendings.size()); ++ppos) {
                const ParserState& pending = pendings[ppos];
                if (!pending.alive) continue;
                const Symbol* sym = chart.next_symbol(pending);
                if (!sym || sym->kind != SymbolKind::Nonterminal) continue;
                const int z = g.nonterminal_index(sym->id);
                if (r_unit(z, y) <= 0.0) continue;

                double log_f = 0.0;
                if (sim.anchor != SimilarityConfig::Anchor::Off) {
                    const KinematicState& other =
                        sim.anchor == SimilarityConfig::Anchor::HighHigh ? finished.high : finished.low;
                    const double d = (pending.high.position() - other.position()).norm();
                    log_f = -std::pow(d / sim.theta1, sim.theta2);
                }

                const double log_ru = std::log(r_unit(z, y));
                ParserState next;
                next.end = k;
                next.start = pending.start;
                next.rule = pending.rule;
                next.dot = pending.dot + 1;
                next.origin = StateOrigin::Complete;
                next.alpha = pending.alpha + log_ru + finished.gamma + log_f;
                next.gamma = pending.gamma + log_ru + finished.gamma + log_f;
                next.viterbi = pending.viterbi + std::log(tables.unit_chain_max(z, y)) +
                               finished.viterbi + log_f;
                next.low = pending.low;
                next.high = finished.high;
                next.bp_parent = {j, ppos};
                next.bp_finished = {k, fpos};
                chart.add_or_merge(k, std::move(next));
            }
        }
    }
    chart.prune_set(k, StateOrigin::Complete, prune_offset);
}

void advance(Chart& chart, const SoftTerminal& input) {
    scan(chart, input);
    const int k = chart.frontier();
    complete(chart, k, chart.options().similarity, chart.options().prune_offset);
    predict(chart, k, chart.options().prune_offset);
}

double log_prefix_probability(const Chart& chart, int k) {
    if (k == 0) return 0.0;
    if (k > chart.frontier()) throw std::out_of_range("prefix_probability: scan index beyond frontier");
    double total = kLogZero;
    for (const auto& s : chart.set(k))
        if (s.alive && s.origin == StateOrigin::Scan) total = log_add(total, s.alpha);
    return total;
}

double prefix_probability(const Chart& chart, int k) {
    return linear_from_log(log_prefix_probability(chart, k));
}

double log_sentence_probability(const Chart& chart) {
    const int k = chart.frontier();
    for (const auto& s : chart.set(k))
        if (s.alive && s.rule < 0 && s.start == 0 && s.dot == 1) return s.gamma;
    return kLogZero;
}

double sentence_probability(const Chart& chart) {
    return linear_from_log(log_sentence_probability(chart));
}

std::map<std::string, double> next_terminal_distribution(const Chart& chart, int k,
                                                         const std::vector<std::string>& support) {
    const std::vector<std::string>& terms = support.empty() ? chart.grammar().terminals() : support;
    std::map<std::string, double> mass;
    for (const auto& t : terms) mass[t] = kLogZero;

    double total = kLogZero;
    if (k <= chart.frontier()) {
        for (const auto& s : chart.set(k)) {
            if (!s.alive) continue;
            const Symbol* sym = chart.next_symbol(s);
            if (!sym || sym->kind != SymbolKind::Terminal) continue;
            auto it = mass.find(sym->id);
            if (it == mass.end()) continue;
            it->second = log_add(it->second, s.alpha);
            total = log_add(total, s.alpha);
        }
    }

    std::map<std::string, double> out;
    if (total == kLogZero) {
        for (const auto& t : terms) out[t] = 1.0 / double(terms.size());
        return out;
    }
    for (const auto& [t, lp] : mass) out[t] = lp == kLogZero ? 0.0 : std::exp(lp - total);
    return out;
}

namespace {

ParseNode build_node(const Chart& chart, const ParserState& state);

// Children of a state's consumed prefix, walking scan/completion backpointers.
void collect_children(const Chart& chart, const ParserState& state, std::vector<ParseNode>& out) {
    if (state.dot == 0) return;
    const ParserState* cur = &state;
    std::vector<ParseNode> rev;
    while (cur->dot > 0) {
        if (!cur->bp_parent.valid())
            throw std::logic_error("viterbi_parse: missing backpointer");
        const ParserState& parent = chart.set(cur->bp_parent.set)[cur->bp_parent.pos];
        if (cur->bp_finished.valid()) {
            const ParserState& finished = chart.set(cur->bp_finished.set)[cur->bp_finished.pos];
            const auto& g = chart.grammar();
            const int z = g.nonterminal_index(chart.rhs_of(parent)[parent.dot].id);
            const int y = g.nonterminal_index(g.productions()[finished.rule].lhs);
            // Wrap the finished subtree in the best unit chain Z => ... => Y.
            ParseNode node = build_node(chart, finished);
            int cur_nt = y;
            std::vector<int> chain;
            int walker = z;
            while (walker != cur_nt) {
                const int r = chart.tables().unit_chain_step(walker, cur_nt);
                if (r < 0) break;
                chain.push_back(r);
                walker = g.nonterminal_index(g.productions()[r].rhs[0].id);
            }
            for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
                ParseNode wrap;
                wrap.symbol = g.productions()[*it].lhs;
                wrap.rule = *it;
                wrap.span_start = node.span_start;
                wrap.span_end = node.span_end;
                wrap.children.push_back(std::move(node));
                node = std::move(wrap);
            }
            rev.push_back(std::move(node));
        } else {
            ParseNode leaf;
            leaf.symbol = chart.rhs_of(*cur)[cur->dot - 1].id;
            leaf.span_start = cur->end - 1;
            leaf.span_end = cur->end;
            rev.push_back(std::move(leaf));
        }
        cur = &parent;
    }
    for (auto it = rev.rbegin(); it != rev.rend(); ++it) out.push_back(std::move(*it));
}

ParseNode build_node(const Chart& chart, const ParserState& state) {
    ParseNode node;
    node.symbol = chart.lhs_of(state);
    node.rule = state.rule;
    node.span_start = state.start;
    node.span_end = state.end;
    collect_children(chart, state, node.children);
    return node;
}

}  // namespace

std::optional<ParseTree> viterbi_parse(const Chart& chart) {
    const int k = chart.frontier();
    const ParserState* dummy = nullptr;
    for (const auto& s : chart.set(k))
        if (s.alive && s.rule < 0 && s.start == 0 && s.dot == 1) dummy = &s;
    if (!dummy) return std::nullopt;

    // The dummy's only child is the start symbol's subtree.
    ParseNode root = build_node(chart, *dummy);
    ParseTree tree;
    tree.log_prob = dummy->viterbi;
    tree.root = std::move(root.children.front());
    return tree;
}

namespace {

void tree_text(const ParseNode& n, int depth, std::ostringstream& os) {
    os << std::string(std::size_t(depth) * 2, ' ') << n.symbol;
    if (n.rule < 0)
        os << " @" << n.span_start;
    else
        os << " [" << n.span_start << "," << n.span_end << ")";
    os << "\n";
    for (const auto& c : n.children) tree_text(c, depth + 1, os);
}

nlohmann::json tree_json(const ParseNode& n) {
    nlohmann::json j;
    j["symbol"] = n.symbol;
    j["rule"] = n.rule;
    j["span"] = {n.span_start, n.span_end};
    auto& kids = j["children"] = nlohmann::json::array();
    for (const auto& c : n.children) kids.push_back(tree_json(c));
    return j;
}

}  // namespace

std::string parse_tree_text(const ParseNode& node) {
    std::ostringstream os;
    tree_text(node, 0, os);
    return os.str();
}

std::string parse_tree_json_string(const ParseTree& tree) {
    nlohmann::json j;
    j["log_prob"] = tree.log_prob;
    j["root"] = tree_json(tree.root);
    return j.dump(2) + "\n";
}

std::string dump_chart(const Chart& chart) {
    static const char* origin_names[] = {"init", "predict", "scan", "complete"};
    std::ostringstream os;
    for (int k = 0; k <= chart.frontier(); ++k) {
        for (const auto& s : chart.set(k)) {
            if (!s.alive) continue;
            nlohmann::json j;
            j["k"] = s.end;
            j["i"] = s.start;
            j["lhs"] = chart.lhs_of(s);
            auto& rhs = j["rhs"] = nlohmann::json::array();
            for (const auto& sym : chart.rhs_of(s)) rhs.push_back(sym.id);
            j["dot"] = s.dot;
            j["origin"] = origin_names[int(s.origin)];
            j["alpha"] = linear_from_log(s.alpha);
            j["gamma"] = linear_from_log(s.gamma);
            j["log_alpha"] = s.alpha;
            j["log_gamma"] = s.gamma;
            auto state_json = [](const KinematicState& st) {
                return nlohmann::json{{"x", st.x}, {"y", st.y}, {"vx", st.vx}, {"vy", st.vy}, {"t", st.t}};
            };
            j["low"] = state_json(s.low);
            j["high"] = state_json(s.high);
            os << j.dump() << "\n";
        }
    }
    return os.str();
}

}  // namespace syntrack
