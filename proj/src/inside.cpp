#include "syntrack/inside.hpp"

#include <map>
#include <stdexcept>

#include <Eigen/Dense>

namespace syntrack {

namespace {

// Chomsky normal form with weights: every rule is either X -> Y Z or X -> t.
struct CnfGrammar {
    int symbols = 0;  // nonterminal count (original + fresh)
    int start = 0;
    struct Binary {
        int lhs, left, right;
        double prob;
    };
    struct Lexical {
        int lhs;
        std::string terminal;
        double prob;
    };
    std::vector<Binary> binary;
    std::vector<Lexical> lexical;
};

CnfGrammar to_cnf(const Grammar& g) {
    CnfGrammar cnf;
    std::map<std::string, int> id;
    auto sym = [&](const std::string& name) {
        auto [it, fresh] = id.emplace(name, int(id.size()));
        (void)fresh;
        return it->second;
    };
    for (const auto& n : g.nonterminals()) sym(n);
    cnf.start = sym(g.start());

    // Preterminal wrappers so long rules only mention nonterminals.
    auto preterminal = [&](const std::string& t) { return sym("[t:" + t + "]"); };

    struct UnitRule {
        int lhs, rhs;
        double prob;
    };
    std::vector<UnitRule> units;
    std::vector<CnfGrammar::Binary> binary;
    std::vector<CnfGrammar::Lexical> lexical;

    for (std::size_t pi = 0; pi < g.productions().size(); ++pi) {
        const auto& p = g.productions()[pi];
        const int lhs = sym(p.lhs);
        if (p.rhs.size() == 1) {
            if (p.rhs[0].kind == SymbolKind::Terminal)
                lexical.push_back({lhs, p.rhs[0].id, p.prob});
            else
                units.push_back({lhs, sym(p.rhs[0].id), p.prob});
            continue;
        }
        // Replace terminals, then binarize right-to-left with fresh symbols
        // carrying probability 1 so the original rule keeps all the mass.
        std::vector<int> seq;
        for (const auto& s : p.rhs) {
            if (s.kind == SymbolKind::Terminal) {
                const int w = preterminal(s.id);
                seq.push_back(w);
            } else {
                seq.push_back(sym(s.id));
            }
        }
        int right = seq.back();
        for (int k = int(seq.size()) - 2; k >= 1; --k) {
            const int fresh = sym("[bin:" + std::to_string(pi) + ":" + std::to_string(k) + "]");
            binary.push_back({fresh, seq[k], right, 1.0});
            right = fresh;
        }
        binary.push_back({lhs, seq[0], right, p.prob});
    }
    // Lexical rules for every wrapper actually created.
    for (const auto& [name, idx] : id)
        if (name.rfind("[t:", 0) == 0) lexical.push_back({idx, name.substr(3, name.size() - 4), 1.0});

    cnf.symbols = int(id.size());

    // Fold unit rules: total weight of all unit chains A =>* B is the
    // Neumann series (I - U)^{-1}; every non-unit rule of B is re-rooted at A
    // with that weight.
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(cnf.symbols, cnf.symbols);
    for (const auto& r : units) u(r.lhs, r.rhs) += r.prob;
    Eigen::MatrixXd closure =
        (Eigen::MatrixXd::Identity(cnf.symbols, cnf.symbols) - u).fullPivLu().inverse();

    for (const auto& b : binary)
        for (int a = 0; a < cnf.symbols; ++a)
            if (closure(a, b.lhs) > 0.0) cnf.binary.push_back({a, b.left, b.right, closure(a, b.lhs) * b.prob});
    for (const auto& l : lexical)
        for (int a = 0; a < cnf.symbols; ++a)
            if (closure(a, l.lhs) > 0.0) cnf.lexical.push_back({a, l.terminal, closure(a, l.lhs) * l.prob});
    return cnf;
}

}  // namespace

double inside_probability(const Grammar& g, const std::vector<std::string>& s) {
    require_valid(g);
    if (s.size() > 20) throw std::invalid_argument("inside_probability: string longer than 20 terminals");
    for (const auto& t : s)
        if (!g.is_terminal(t)) throw std::invalid_argument("inside_probability: unknown terminal: " + t);
    if (s.empty()) return 0.0;  // epsilon is never derivable (no empty rules)

    const CnfGrammar cnf = to_cnf(g);
    const int n = int(s.size());
    // inside[i][len-1][sym]
    std::vector<std::vector<std::vector<double>>> inside(
        n, std::vector<std::vector<double>>(n, std::vector<double>(cnf.symbols, 0.0)));

    for (int i = 0; i < n; ++i)
        for (const auto& l : cnf.lexical)
            if (l.terminal == s[i]) inside[i][0][l.lhs] += l.prob;

    for (int len = 2; len <= n; ++len)
        for (int i = 0; i + len <= n; ++i)
            for (const auto& b : cnf.binary) {
                double total = 0.0;
                for (int split = 1; split < len; ++split) {
                    const double left = inside[i][split - 1][b.left];
                    if (left == 0.0) continue;
                    total += left * inside[i + split][len - split - 1][b.right];
                }
                if (total > 0.0) inside[i][len - 1][b.lhs] += b.prob * total;
            }

    return inside[0][n - 1][cnf.start];
}

double inside_probability(const Grammar& g, const std::string& compact) {
    return inside_probability(g, split_terminal_string(compact));
}

}  // namespace syntrack
