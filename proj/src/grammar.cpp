#include "syntrack/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace syntrack {

Grammar::Grammar(std::vector<std::string> terminals, std::vector<std::string> nonterminals,
                 std::vector<Production> productions, std::string start)
    : terminals_(std::move(terminals)),
      nonterminals_(std::move(nonterminals)),
      productions_(std::move(productions)),
      start_(std::move(start)) {
    for (std::size_t i = 0; i < terminals_.size(); ++i) terminal_index_.emplace(terminals_[i], int(i));
    for (std::size_t i = 0; i < nonterminals_.size(); ++i) nonterminal_index_.emplace(nonterminals_[i], int(i));
    by_lhs_.resize(nonterminals_.size());
    for (std::size_t p = 0; p < productions_.size(); ++p) {
        auto it = nonterminal_index_.find(productions_[p].lhs);
        if (it != nonterminal_index_.end()) by_lhs_[it->second].push_back(int(p));
    }
}

int Grammar::terminal_index(const std::string& id) const {
    auto it = terminal_index_.find(id);
    return it == terminal_index_.end() ? -1 : it->second;
}

int Grammar::nonterminal_index(const std::string& id) const {
    auto it = nonterminal_index_.find(id);
    return it == nonterminal_index_.end() ? -1 : it->second;
}

const std::vector<int>& Grammar::productions_of(int nonterminal_idx) const {
    if (nonterminal_idx < 0 || nonterminal_idx >= int(by_lhs_.size())) return empty_;
    return by_lhs_[nonterminal_idx];
}

const std::vector<int>& Grammar::productions_of(const std::string& lhs) const {
    return productions_of(nonterminal_index(lhs));
}

namespace {

std::string rule_text(const Production& p) {
    std::ostringstream os;
    os << p.lhs << " ->";
    for (const auto& s : p.rhs) os << ' ' << s.id;
    return os.str();
}

}  // namespace

std::vector<Violation> validate(const Grammar& g) {
    std::vector<Violation> out;

    for (const auto& t : g.terminals())
        if (g.is_nonterminal(t))
            out.push_back({"alphabet-overlap", "symbol declared both terminal and nonterminal: " + t});

    if (!g.is_nonterminal(g.start()))
        out.push_back({"bad-start", "start symbol is not a declared nonterminal: " + g.start()});

    for (const auto& p : g.productions()) {
        if (!g.is_nonterminal(p.lhs))
            out.push_back({"undeclared-lhs", "production lhs is not a declared nonterminal: " + p.lhs});
        if (p.rhs.empty())
            out.push_back({"epsilon-rule", "empty right-hand side on " + p.lhs});
        if (!(p.prob > 0.0) || p.prob > 1.0)
            out.push_back({"bad-probability", rule_text(p) + " has probability outside (0, 1]"});
        for (const auto& s : p.rhs) {
            const bool declared = s.kind == SymbolKind::Terminal ? g.is_terminal(s.id) : g.is_nonterminal(s.id);
            if (!declared)
                out.push_back({"undeclared-symbol", "rhs symbol not declared: " + s.id + " in " + rule_text(p)});
        }
    }

    // Per-lhs probability mass.
    for (std::size_t n = 0; n < g.nonterminals().size(); ++n) {
        const auto& rules = g.productions_of(int(n));
        if (rules.empty()) {
            out.push_back({"no-productions", "nonterminal has no productions: " + g.nonterminals()[n]});
            continue;
        }
        double sum = 0.0;
        for (int r : rules) sum += g.productions()[r].prob;
        if (std::abs(sum - 1.0) > 1e-9) {
            std::ostringstream os;
            os << "probabilities of " << g.nonterminals()[n] << " sum to " << sum;
            out.push_back({"probability-sum", os.str()});
        }
    }

    if (!out.empty()) return out;  // structural problems make the checks below unreliable

    const int n = int(g.nonterminals().size());

    // Reachability from the start symbol.
    std::vector<bool> reach(n, false);
    std::vector<int> stack;
    if (int s = g.nonterminal_index(g.start()); s >= 0) {
        reach[s] = true;
        stack.push_back(s);
    }
    while (!stack.empty()) {
        int a = stack.back();
        stack.pop_back();
        for (int r : g.productions_of(a))
            for (const auto& sym : g.productions()[r].rhs)
                if (sym.kind == SymbolKind::Nonterminal) {
                    int b = g.nonterminal_index(sym.id);
                    if (b >= 0 && !reach[b]) {
                        reach[b] = true;
                        stack.push_back(b);
                    }
                }
    }
    for (int i = 0; i < n; ++i)
        if (!reach[i]) out.push_back({"unreachable", "nonterminal unreachable from start: " + g.nonterminals()[i]});

    // Productivity: fixpoint over "derives some terminal string".
    std::vector<bool> productive(n, false);
    bool changed = true;
    while (changed) {
        changed = false;
        for (const auto& p : g.productions()) {
            int a = g.nonterminal_index(p.lhs);
            if (a < 0 || productive[a]) continue;
            bool ok = true;
            for (const auto& sym : p.rhs)
                if (sym.kind == SymbolKind::Nonterminal && !productive[g.nonterminal_index(sym.id)]) {
                    ok = false;
                    break;
                }
            if (ok) {
                productive[a] = true;
                changed = true;
            }
        }
    }
    for (int i = 0; i < n; ++i)
        if (!productive[i])
            out.push_back({"unproductive", "nonterminal derives no terminal string: " + g.nonterminals()[i]});

    return out;
}

void require_valid(const Grammar& g) {
    auto v = validate(g);
    if (v.empty()) return;
    std::ostringstream os;
    os << "invalid grammar:";
    for (const auto& x : v) os << "\n  [" << x.code << "] " << x.detail;
    throw GrammarError(os.str());
}

MeanMatrix mean_matrix(const Grammar& g) {
    require_valid(g);
    const int n = int(g.nonterminals().size());
    MeanMatrix mm;
    mm.order = g.nonterminals();
    mm.m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& p : g.productions()) {
        int a = g.nonterminal_index(p.lhs);
        for (const auto& sym : p.rhs)
            if (sym.kind == SymbolKind::Nonterminal) mm.m(a, g.nonterminal_index(sym.id)) += p.prob;
    }
    return mm;
}

SpectralRadiusResult spectral_radius(const Eigen::MatrixXd& m) {
    if (m.rows() != m.cols()) throw std::invalid_argument("spectral_radius: matrix not square");
    const int n = int(m.rows());
    if (n == 0) return {0.0, true, 0};

    // Power iteration on (M + I). The shift adds exactly 1 to the dominant
    // eigenvalue of a non-negative matrix and removes periodicity.
    Eigen::MatrixXd shifted = m + Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd x = Eigen::VectorXd::Ones(n) / std::sqrt(double(n));
    double estimate = 0.0;
    const int max_iter = 10000;
    for (int it = 1; it <= max_iter; ++it) {
        Eigen::VectorXd y = shifted * x;
        const double norm = y.norm();
        if (norm == 0.0) return {0.0, true, it};
        y /= norm;
        const double rayleigh = y.dot(shifted * y);
        if (it > 1 && std::abs(rayleigh - estimate) < 1e-12)
            return {std::max(0.0, rayleigh - 1.0), true, it};
        estimate = rayleigh;
        x = y;
    }
    return {std::max(0.0, estimate - 1.0), false, max_iter};
}

WellPosedness is_well_posed(const Grammar& g) {
    auto mm = mean_matrix(g);
    auto sr = spectral_radius(mm.m);
    return {sr.value < 1.0 - 1e-9, sr.value};
}

Grammar augment_nondetection(const Grammar& g, const std::string& nd_symbol, double nd_prob) {
    if (g.is_terminal(nd_symbol) || g.is_nonterminal(nd_symbol))
        throw GrammarError("augment_nondetection: symbol already declared: " + nd_symbol);
    if (!(nd_prob > 0.0) || nd_prob >= 1.0)
        throw std::invalid_argument("augment_nondetection: nd_prob must be in (0, 1)");

    bool any = false;
    std::vector<Production> productions;
    for (const auto& p : g.productions()) {
        if (!p.rhs.empty() && p.rhs.front().kind == SymbolKind::Terminal) {
            any = true;
            Production kept = p;
            kept.prob = p.prob * (1.0 - nd_prob);
            Production sibling = p;
            sibling.rhs.front() = Symbol::terminal(nd_symbol);
            sibling.prob = p.prob * nd_prob;
            productions.push_back(std::move(kept));
            productions.push_back(std::move(sibling));
        } else {
            productions.push_back(p);
        }
    }
    if (!any) return g;

    auto terminals = g.terminals();
    terminals.push_back(nd_symbol);
    return Grammar(std::move(terminals), g.nonterminals(), std::move(productions), g.start());
}

const std::vector<std::string>& direction_terminals() {
    static const std::vector<std::string> dirs = {"a", "b", "c", "d", "e", "f", "g", "h"};
    return dirs;
}

namespace {

Symbol T(const std::string& s) { return Symbol::terminal(s); }
Symbol N(const std::string& s) { return Symbol::nonterminal(s); }

// Default probabilities are shaped, not uniform: a standalone line continues
// at 0.85 per step while the m-rectangle's legs continue at 0.6 and its turn
// opens at 0.55. Patterns whose languages overlap (a line prefix is also an
// unfinished m-rectangle) then separate at a steady rate per scan instead of
// hiding behind a constant entry factor. Every self-recursive mass stays
// below 1, so all builtins remain subcritical.
constexpr double kLineContinue = 0.85;
constexpr double kLegContinue = 0.6;
constexpr double kTurnContinue = 0.55;

void add_line_rules(std::vector<Production>& ps, const std::string& nt, const std::string& t,
                    double cont = kLineContinue) {
    ps.push_back({nt, {T(t), N(nt)}, cont});
    ps.push_back({nt, {T(t)}, 1.0 - cont});
}

Grammar wrap(const std::string& pattern_nt, std::vector<std::string> nonterminals,
             std::vector<Production> ps) {
    std::vector<Production> all;
    all.push_back({"S", {N(pattern_nt)}, 1.0});
    all.insert(all.end(), ps.begin(), ps.end());
    std::vector<std::string> nts = {"S"};
    nts.insert(nts.end(), nonterminals.begin(), nonterminals.end());
    return Grammar(direction_terminals(), std::move(nts), std::move(all), "S");
}

std::vector<Production> arc_rules(const std::string& nt, const std::string& up, const std::string& fwd,
                                  const std::string& down) {
    // Mass sits on the matched up/down skeleton; the forward decorations stay
    // cheap so the two mirror arcs do not feed on each other's forward legs.
    // Self-recursion mass 0.55 keeps the pattern subcritical.
    return {
        {nt, {T(up), N(nt), T(down)}, 0.35},
        {nt, {T(fwd), N(nt)}, 0.1},
        {nt, {N(nt), T(fwd)}, 0.1},
        {nt, {T(up), T(down)}, 0.4},
        {nt, {T(fwd)}, 0.05},
    };
}

std::vector<Production> mrect_rules(const std::string& rect, const std::string& turn,
                                    const std::string& leg_nt, const std::string& leg_t,
                                    const std::string& close_nt, const std::string& close_t) {
    std::vector<Production> ps;
    ps.push_back({rect, {N(turn), N(close_nt)}, 1.0});
    ps.push_back({turn, {T("b"), N(turn), T("f")}, kTurnContinue});
    ps.push_back({turn, {N(leg_nt)}, 1.0 - kTurnContinue});
    add_line_rules(ps, leg_nt, leg_t, kLegContinue);
    add_line_rules(ps, close_nt, close_t, kLegContinue);
    return ps;
}

}  // namespace

std::map<std::string, Grammar> builtin_patterns() {
    std::map<std::string, Grammar> out;
    for (const auto& u : direction_terminals()) {
        std::vector<Production> ps;
        const std::string nt = "L_" + u;
        add_line_rules(ps, nt, u);
        out.emplace("line_" + u, wrap(nt, {nt}, std::move(ps)));
    }
    out.emplace("arc_ur", wrap("A_ur", {"A_ur"}, arc_rules("A_ur", "a", "b", "c")));
    // The published rule set points the downward arc at an undefined
    // nonterminal; treated as a typo for the arc's own symbol.
    out.emplace("arc_dr", wrap("A_dr", {"A_dr"}, arc_rules("A_dr", "c", "b", "a")));
    out.emplace("mrect_cl",
                wrap("R_cl", {"R_cl", "T_cl", "L_d", "L_h"},
                     mrect_rules("R_cl", "T_cl", "L_d", "d", "L_h", "h")));
    out.emplace("mrect_cc",
                wrap("R_cc", {"R_cc", "T_cc", "L_h", "L_d"},
                     mrect_rules("R_cc", "T_cc", "L_h", "h", "L_d", "d")));
    return out;
}

Grammar builtin_lines_grammar() {
    std::vector<std::string> nts = {"S"};
    std::vector<Production> ps;
    for (const auto& u : direction_terminals()) ps.push_back({"S", {N("L_" + u)}, 0.125});
    for (const auto& u : direction_terminals()) {
        const std::string nt = "L_" + u;
        nts.push_back(nt);
        add_line_rules(ps, nt, u, 0.5);  // even split; chart walkthroughs use this grammar
    }
    return Grammar(direction_terminals(), std::move(nts), std::move(ps), "S");
}

// ---- text format -----------------------------------------------------------

namespace {

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream is(line);
    std::vector<std::string> toks;
    std::string t;
    while (is >> t) toks.push_back(t);
    return toks;
}

}  // namespace

Grammar parse_grammar_text(std::string_view text) {
    std::vector<std::string> terminals, nonterminals;
    std::string start;
    struct RawRule {
        std::string lhs;
        std::vector<std::string> rhs;
        double prob;
        int line;
    };
    std::vector<RawRule> raw;

    std::istringstream is{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        auto toks = tokenize(line);
        if (toks.empty()) continue;
        auto fail = [&](const std::string& msg) {
            throw GrammarError("grammar text line " + std::to_string(lineno) + ": " + msg);
        };
        if (toks[0] == "%terminals") {
            terminals.insert(terminals.end(), toks.begin() + 1, toks.end());
        } else if (toks[0] == "%nonterminals") {
            nonterminals.insert(nonterminals.end(), toks.begin() + 1, toks.end());
        } else if (toks[0] == "%start") {
            if (toks.size() != 2) fail("%start expects exactly one symbol");
            start = toks[1];
        } else {
            // LHS -> sym sym ... @ prob
            if (toks.size() < 5 || toks[1] != "->" || toks[toks.size() - 2] != "@")
                fail("expected 'LHS -> sym ... @ prob'");
            RawRule r;
            r.lhs = toks[0];
            r.rhs.assign(toks.begin() + 2, toks.end() - 2);
            try {
                std::size_t used = 0;
                r.prob = std::stod(toks.back(), &used);
                if (used != toks.back().size()) fail("bad probability: " + toks.back());
            } catch (const std::exception&) {
                fail("bad probability: " + toks.back());
            }
            r.line = lineno;
            raw.push_back(std::move(r));
        }
    }
    if (start.empty()) throw GrammarError("grammar text: missing %start");

    std::set<std::string> term_set(terminals.begin(), terminals.end());
    std::set<std::string> nt_set(nonterminals.begin(), nonterminals.end());
    std::vector<Production> productions;
    for (const auto& r : raw) {
        Production p;
        p.lhs = r.lhs;
        p.prob = r.prob;
        for (const auto& sym : r.rhs) {
            if (nt_set.count(sym))
                p.rhs.push_back(Symbol::nonterminal(sym));
            else if (term_set.count(sym))
                p.rhs.push_back(Symbol::terminal(sym));
            else
                throw GrammarError("grammar text line " + std::to_string(r.line) +
                                   ": symbol not declared in %terminals/%nonterminals: " + sym);
        }
        productions.push_back(std::move(p));
    }
    return Grammar(std::move(terminals), std::move(nonterminals), std::move(productions), start);
}

std::string format_grammar_text(const Grammar& g) {
    std::ostringstream os;
    os << "%terminals";
    for (const auto& t : g.terminals()) os << ' ' << t;
    os << "\n%nonterminals";
    for (const auto& n : g.nonterminals()) os << ' ' << n;
    os << "\n%start " << g.start() << "\n";
    os.precision(17);
    for (const auto& p : g.productions()) {
        os << p.lhs << " ->";
        for (const auto& s : p.rhs) os << ' ' << s.id;
        os << " @ " << p.prob << "\n";
    }
    return os.str();
}

std::string grammar_to_json_string(const Grammar& g) {
    nlohmann::json j;
    j["terminals"] = g.terminals();
    j["nonterminals"] = g.nonterminals();
    j["start"] = g.start();
    auto& rules = j["productions"] = nlohmann::json::array();
    for (const auto& p : g.productions()) {
        nlohmann::json r;
        r["lhs"] = p.lhs;
        r["prob"] = p.prob;
        auto& rhs = r["rhs"] = nlohmann::json::array();
        for (const auto& s : p.rhs)
            rhs.push_back({{"kind", s.kind == SymbolKind::Terminal ? "terminal" : "nonterminal"},
                           {"id", s.id}});
        rules.push_back(std::move(r));
    }
    return j.dump(2) + "\n";
}

Grammar grammar_from_json_string(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw GrammarError(std::string("grammar json: ") + e.what());
    }
    try {
        std::vector<Production> productions;
        for (const auto& r : j.at("productions")) {
            Production p;
            p.lhs = r.at("lhs").get<std::string>();
            p.prob = r.at("prob").get<double>();
            for (const auto& s : r.at("rhs")) {
                const auto kind = s.at("kind").get<std::string>();
                if (kind != "terminal" && kind != "nonterminal")
                    throw GrammarError("grammar json: bad symbol kind: " + kind);
                p.rhs.push_back({kind == "terminal" ? SymbolKind::Terminal : SymbolKind::Nonterminal,
                                 s.at("id").get<std::string>()});
            }
            productions.push_back(std::move(p));
        }
        return Grammar(j.at("terminals").get<std::vector<std::string>>(),
                       j.at("nonterminals").get<std::vector<std::string>>(), std::move(productions),
                       j.at("start").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw GrammarError(std::string("grammar json: ") + e.what());
    }
}

Grammar load_grammar(const std::string& name_or_path) {
    if (name_or_path == "lines") return builtin_lines_grammar();
    auto builtins = builtin_patterns();
    if (auto it = builtins.find(name_or_path); it != builtins.end()) return it->second;

    std::ifstream in(name_or_path);
    if (!in) throw GrammarError("unknown grammar (not a builtin name, file not readable): " + name_or_path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (name_or_path.size() > 5 && name_or_path.substr(name_or_path.size() - 5) == ".json")
        return grammar_from_json_string(buf.str());
    return parse_grammar_text(buf.str());
}

std::vector<std::string> split_terminal_string(const std::string& s) {
    std::vector<std::string> out;
    if (s.find_first_of(" \t\n") != std::string::npos) {
        std::istringstream is(s);
        std::string t;
        while (is >> t) out.push_back(t);
    } else {
        for (char c : s) out.emplace_back(1, c);
    }
    return out;
}

}  // namespace syntrack
