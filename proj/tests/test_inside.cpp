#include <doctest.h>

#include "oracles.hpp"
#include "syntrack/grammar.hpp"
#include "syntrack/inside.hpp"

using namespace syntrack;
namespace to = syntrack::testing;

TEST_CASE("inside probability of direct arc rules") {
    const Grammar arc = builtin_patterns().at("arc_ur");
    // Unique derivations: P("ac") is the direct-rule probability, P("aacc")
    // nests once through A -> a A c.
    double p_close = 0.0, p_nest = 0.0;
    for (const auto& p : arc.productions()) {
        if (p.lhs != "A_ur") continue;
        if (p.rhs.size() == 2 && p.rhs[0].id == "a") p_close = p.prob;
        if (p.rhs.size() == 3) p_nest = p.prob;
    }
    REQUIRE(p_close > 0.0);
    REQUIRE(p_nest > 0.0);
    CHECK(inside_probability(arc, "ac") == doctest::Approx(p_close).epsilon(1e-12));
    CHECK(inside_probability(arc, "aacc") == doctest::Approx(p_nest * p_close).epsilon(1e-12));
    CHECK(inside_probability(arc, "aac") == doctest::Approx(0.0));
}

TEST_CASE("inside probability rejects unknown terminals and long strings") {
    const Grammar arc = builtin_patterns().at("arc_ur");
    CHECK_THROWS_AS(inside_probability(arc, std::vector<std::string>{"z"}), std::invalid_argument);
    CHECK_THROWS_AS(inside_probability(arc, std::vector<std::string>(21, "a")),
                    std::invalid_argument);
}

TEST_CASE("inside equals brute-force derivation enumeration on short strings") {
    auto patterns = builtin_patterns();
    patterns.emplace("lines", builtin_lines_grammar());
    const std::map<std::string, std::vector<std::string>> alphabets = {
        {"arc_ur", {"a", "b", "c"}}, {"arc_dr", {"a", "b", "c"}}, {"mrect_cl", {"b", "d", "f", "h"}},
        {"line_b", {"a", "b"}},      {"lines", {"b", "d"}},
    };
    for (const auto& [name, alphabet] : alphabets) {
        const Grammar& g = patterns.at(name);
        for (int len = 1; len <= 4; ++len)
            for (const auto& s : to::all_strings(alphabet, len)) {
                const double oracle = to::enumerate_derivations(g, s, 25);
                const double inside = inside_probability(g, s);
                INFO(name, " len ", len);
                CHECK(std::abs(inside - oracle) < 1e-9);
            }
    }
}

TEST_CASE("language separation: balanced arcs only") {
    const Grammar arc = builtin_patterns().at("arc_ur");
    for (int n = 1; n <= 4; ++n)
        for (int m = 0; m <= 2; ++m) {
            std::vector<std::string> s;
            for (int i = 0; i < n; ++i) s.push_back("a");
            for (int i = 0; i < m; ++i) s.push_back("b");
            for (int i = 0; i < n; ++i) s.push_back("c");
            INFO("n=", n, " m=", m);
            CHECK(inside_probability(arc, s) > 0.0);
        }
    for (int n = 1; n <= 4; ++n)
        for (int k = 1; k <= 4; ++k) {
            if (n == k) continue;
            std::vector<std::string> s;
            for (int i = 0; i < n; ++i) s.push_back("a");
            for (int i = 0; i < k; ++i) s.push_back("c");
            INFO("n=", n, " k=", k);
            CHECK(inside_probability(arc, s) == 0.0);
        }
}

TEST_CASE("inside supports unit chains and binarization") {
    // S -> A (unit), A -> a B c (ternary), B -> b.
    Grammar g({"a", "b", "c"}, {"S", "A", "B"},
              {{"S", {Symbol::nonterminal("A")}, 1.0},
               {"A",
                {Symbol::terminal("a"), Symbol::nonterminal("B"), Symbol::terminal("c")},
                0.7},
               {"A", {Symbol::terminal("b")}, 0.3},
               {"B", {Symbol::terminal("b")}, 1.0}},
              "S");
    CHECK(inside_probability(g, "abc") == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(inside_probability(g, "b") == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(inside_probability(g, "ab") == doctest::Approx(0.0));
}
