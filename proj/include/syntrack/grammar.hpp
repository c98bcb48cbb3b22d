#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace syntrack {

class GrammarError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SymbolKind { Terminal, Nonterminal };

struct Symbol {
    SymbolKind kind = SymbolKind::Terminal;
    std::string id;

    bool operator==(const Symbol&) const = default;
    static Symbol terminal(std::string id) { return {SymbolKind::Terminal, std::move(id)}; }
    static Symbol nonterminal(std::string id) { return {SymbolKind::Nonterminal, std::move(id)}; }
};

struct Production {
    std::string lhs;
    std::vector<Symbol> rhs;  // never empty in a valid grammar
    double prob = 0.0;
};

/// Probabilistic context-free grammar: terminal/nonterminal alphabets in
/// declaration order, weighted productions, and a start nonterminal.
/// Immutable after construction; validity is checked separately by validate().
class Grammar {
public:
    Grammar() = default;
    Grammar(std::vector<std::string> terminals, std::vector<std::string> nonterminals,
            std::vector<Production> productions, std::string start);

    const std::vector<std::string>& terminals() const { return terminals_; }
    const std::vector<std::string>& nonterminals() const { return nonterminals_; }
    const std::vector<Production>& productions() const { return productions_; }
    const std::string& start() const { return start_; }

    bool is_terminal(const std::string& id) const { return terminal_index_.count(id) > 0; }
    bool is_nonterminal(const std::string& id) const { return nonterminal_index_.count(id) > 0; }

    // -1 when the id is not declared.
    int terminal_index(const std::string& id) const;
    int nonterminal_index(const std::string& id) const;

    /// Production indices with the given left-hand side, in declaration order.
    const std::vector<int>& productions_of(int nonterminal_idx) const;
    const std::vector<int>& productions_of(const std::string& lhs) const;

private:
    std::vector<std::string> terminals_;
    std::vector<std::string> nonterminals_;
    std::vector<Production> productions_;
    std::string start_;
    std::map<std::string, int> terminal_index_;
    std::map<std::string, int> nonterminal_index_;
    std::vector<std::vector<int>> by_lhs_;
    std::vector<int> empty_;
};

struct Violation {
    std::string code;    // e.g. "probability-sum", "undeclared-symbol"
    std::string detail;
};

/// Every invariant violation found; empty result means the grammar is usable
/// by all other operations.
std::vector<Violation> validate(const Grammar& g);

/// Throws GrammarError listing all violations if the grammar is not valid.
void require_valid(const Grammar& g);

/// Expected nonterminal offspring counts: entry (A,B) is the expected number
/// of B instances produced by one rewrite of A.
struct MeanMatrix {
    Eigen::MatrixXd m;
    std::vector<std::string> order;  // row/column labels, declaration order
};

MeanMatrix mean_matrix(const Grammar& g);

struct SpectralRadiusResult {
    double value = 0.0;
    bool converged = true;
    int iterations = 0;
};

/// Dominant eigenvalue magnitude of a non-negative square matrix by power
/// iteration (shifted by the identity so periodic matrices converge too).
SpectralRadiusResult spectral_radius(const Eigen::MatrixXd& m);

struct WellPosedness {
    bool subcritical = false;
    double radius = 0.0;
};

/// Subcritical grammars terminate almost surely when sampled.
WellPosedness is_well_posed(const Grammar& g);

/// For every production whose right-hand side begins with a terminal, add a
/// sibling with that terminal replaced by nd_symbol. The sibling takes the
/// fraction nd_prob of the original rule's mass, so each lhs still sums to 1.
Grammar augment_nondetection(const Grammar& g, const std::string& nd_symbol, double nd_prob);

/// The eight direction terminals a..h.
const std::vector<std::string>& direction_terminals();

/// Built-in trajectory pattern grammars keyed by name: line_a..line_h,
/// arc_ur, arc_dr, mrect_cl, mrect_cc. Each is wrapped with its own start
/// symbol S and uses uniform rule probabilities per lhs, which already keeps
/// every one of them subcritical (line self-recursion 0.5, arc 0.6, turn 0.5).
std::map<std::string, Grammar> builtin_patterns();

/// All eight line patterns under a single start symbol: S -> L_a | ... | L_h.
Grammar builtin_lines_grammar();

// ---- text / file format ----------------------------------------------------
//
//   # comment
//   %terminals a b c
//   %nonterminals S A
//   %start S
//   A -> a A c @ 0.2
//
// One production per line; symbols are whitespace separated.

Grammar parse_grammar_text(std::string_view text);
std::string format_grammar_text(const Grammar& g);

std::string grammar_to_json_string(const Grammar& g);
Grammar grammar_from_json_string(const std::string& text);

/// Resolves a builtin name ("arc_ur", "lines", ...) or loads a file
/// (.json for the JSON form, anything else as grammar text).
Grammar load_grammar(const std::string& name_or_path);

/// Splits "aacc" into single-character terminal ids, or on whitespace when
/// present ("nd b nd" style) so multi-character terminals stay addressable.
std::vector<std::string> split_terminal_string(const std::string& s);

}  // namespace syntrack
