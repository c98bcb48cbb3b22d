#include <doctest.h>

#include <cmath>
#include <set>

#include "oracles.hpp"
#include "syntrack/grammar.hpp"
#include "syntrack/random.hpp"
#include "syntrack/simulator.hpp"

using namespace syntrack;
namespace to = syntrack::testing;

namespace {

Grammar line_grammar(double p_continue = 0.5) {
    return Grammar({"a"}, {"S"},
                   {{"S", {Symbol::terminal("a"), Symbol::nonterminal("S")}, p_continue},
                    {"S", {Symbol::terminal("a")}, 1.0 - p_continue}},
                   "S");
}

}  // namespace

TEST_CASE("validate accepts a proper line grammar") {
    CHECK(validate(line_grammar()).empty());
}

TEST_CASE("validate flags a bad probability sum") {
    Grammar g({"a"}, {"S"},
              {{"S", {Symbol::terminal("a"), Symbol::nonterminal("S")}, 0.6},
               {"S", {Symbol::terminal("a")}, 0.6}},
              "S");
    const auto v = validate(g);
    REQUIRE(v.size() == 1);
    CHECK(v[0].code == "probability-sum");
}

TEST_CASE("validate flags undeclared symbols") {
    Grammar g({"a"}, {"S"}, {{"S", {Symbol::terminal("z")}, 1.0}}, "S");
    bool found = false;
    for (const auto& v : validate(g)) found |= v.code == "undeclared-symbol";
    CHECK(found);
}

TEST_CASE("validate flags epsilon rules, unreachable and unproductive nonterminals") {
    Grammar eps({"a"}, {"S"}, {{"S", {}, 1.0}}, "S");
    bool has_eps = false;
    for (const auto& v : validate(eps)) has_eps |= v.code == "epsilon-rule";
    CHECK(has_eps);

    Grammar unreachable({"a"}, {"S", "B"},
                        {{"S", {Symbol::terminal("a")}, 1.0}, {"B", {Symbol::terminal("a")}, 1.0}},
                        "S");
    bool has_unreachable = false;
    for (const auto& v : validate(unreachable)) has_unreachable |= v.code == "unreachable";
    CHECK(has_unreachable);

    Grammar unproductive({"a"}, {"S", "B"},
                         {{"S", {Symbol::nonterminal("B")}, 1.0},
                          {"B", {Symbol::terminal("a"), Symbol::nonterminal("B")}, 1.0}},
                         "S");
    bool has_unproductive = false;
    for (const auto& v : validate(unproductive)) has_unproductive |= v.code == "unproductive";
    CHECK(has_unproductive);
}

TEST_CASE("mean matrix of a self-recursive line grammar") {
    const auto mm = mean_matrix(line_grammar(0.3));
    REQUIRE(mm.order == std::vector<std::string>{"S"});
    CHECK(mm.m(0, 0) == doctest::Approx(0.3));
}

TEST_CASE("mean matrix of the arc rules counts self occurrences") {
    const Grammar g = builtin_patterns().at("arc_ur");
    const auto mm = mean_matrix(g);
    const int s = int(std::find(mm.order.begin(), mm.order.end(), "S") - mm.order.begin());
    const int a = int(std::find(mm.order.begin(), mm.order.end(), "A_ur") - mm.order.begin());
    CHECK(mm.m(a, a) == doctest::Approx(0.55));  // aAc + bA + Ab self occurrences
    CHECK(mm.m(s, a) == doctest::Approx(1.0));
    CHECK(mm.m(s, s) == doctest::Approx(0.0));
}

TEST_CASE("mean matrix of the m-rectangle grammar matches a hand count") {
    const Grammar g = builtin_patterns().at("mrect_cl");
    const auto mm = mean_matrix(g);
    auto idx = [&](const std::string& n) {
        return int(std::find(mm.order.begin(), mm.order.end(), n) - mm.order.begin());
    };
    // Hand enumeration of nonterminal occurrences per rule, weighted by the
    // default probabilities: S->R_cl(1); R_cl->T_cl L_h(1); T_cl->b T_cl f
    // (.55) | L_d(.45); L_d->d L_d(.6)|d(.4); L_h->h L_h(.6)|h(.4).
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(5, 5);
    expected(idx("S"), idx("R_cl")) = 1.0;
    expected(idx("R_cl"), idx("T_cl")) = 1.0;
    expected(idx("R_cl"), idx("L_h")) = 1.0;
    expected(idx("T_cl"), idx("T_cl")) = 0.55;
    expected(idx("T_cl"), idx("L_d")) = 0.45;
    expected(idx("L_d"), idx("L_d")) = 0.6;
    expected(idx("L_h"), idx("L_h")) = 0.6;
    CHECK((mm.m - expected).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("spectral radius of scalar and diagonal matrices") {
    Eigen::MatrixXd one(1, 1);
    one << 0.7;
    CHECK(spectral_radius(one).value == doctest::Approx(0.7).epsilon(1e-10));

    Eigen::MatrixXd diag = Eigen::MatrixXd::Zero(2, 2);
    diag(0, 0) = 0.3;
    diag(1, 1) = 0.7;
    CHECK(spectral_radius(diag).value == doctest::Approx(0.7).epsilon(1e-10));
}

TEST_CASE("spectral radius of the arc mean matrix matches characteristic roots") {
    const auto mm = mean_matrix(builtin_patterns().at("arc_ur"));
    // 2x2 closed form: roots of l^2 - tr l + det.
    const double tr = mm.m.trace();
    const double det = mm.m.determinant();
    const double disc = std::sqrt(tr * tr - 4.0 * det);
    const double root = std::max(std::abs((tr + disc) / 2.0), std::abs((tr - disc) / 2.0));
    CHECK(spectral_radius(mm.m).value == doctest::Approx(root).epsilon(1e-9));
}

TEST_CASE("well-posedness verdicts") {
    CHECK(is_well_posed(line_grammar()).subcritical);
    CHECK(is_well_posed(line_grammar()).radius == doctest::Approx(0.5));

    Grammar super({"a"}, {"S"},
                  {{"S", {Symbol::nonterminal("S"), Symbol::nonterminal("S")}, 0.6},
                   {"S", {Symbol::terminal("a")}, 0.4}},
                  "S");
    const auto wp = is_well_posed(super);
    CHECK_FALSE(wp.subcritical);
    CHECK(wp.radius == doctest::Approx(1.2).epsilon(1e-9));
}

TEST_CASE("every builtin pattern validates and is subcritical") {
    for (const auto& [name, g] : builtin_patterns()) {
        INFO(name);
        CHECK(validate(g).empty());
        CHECK(is_well_posed(g).subcritical);
    }
    CHECK(validate(builtin_lines_grammar()).empty());
    CHECK(is_well_posed(builtin_lines_grammar()).subcritical);
}

TEST_CASE("augment_nondetection splits terminal-initial rules proportionally") {
    Grammar g({"a"}, {"L"},
              {{"L", {Symbol::terminal("a"), Symbol::nonterminal("L")}, 0.5},
               {"L", {Symbol::terminal("a")}, 0.5}},
              "L");
    const Grammar aug = augment_nondetection(g, "nd", 0.1);
    REQUIRE(aug.productions().size() == 4);
    CHECK(aug.productions()[0].prob == doctest::Approx(0.45));
    CHECK(aug.productions()[1].prob == doctest::Approx(0.05));
    CHECK(aug.productions()[1].rhs[0].id == "nd");
    CHECK(aug.productions()[1].rhs[1].id == "L");
    CHECK(aug.productions()[2].prob == doctest::Approx(0.45));
    CHECK(aug.productions()[3].prob == doctest::Approx(0.05));
    CHECK(validate(aug).empty());

    // No terminal-initial rules: unchanged.
    Grammar nt({"a"}, {"S", "B"},
               {{"S", {Symbol::nonterminal("B")}, 1.0}, {"B", {Symbol::terminal("a")}, 1.0}},
               "S");
    // B -> a is terminal-initial, S -> B is not; only B gets a sibling.
    const Grammar aug2 = augment_nondetection(nt, "nd", 0.2);
    CHECK(aug2.productions().size() == 3);
    CHECK(validate(aug2).empty());

    CHECK_THROWS_AS(augment_nondetection(g, "a", 0.1), GrammarError);
}

TEST_CASE("builtin arc contains the published rule skeleton") {
    const Grammar g = builtin_patterns().at("arc_ur");
    std::set<std::string> rules;
    for (const auto& p : g.productions()) {
        std::string r = p.lhs + "->";
        for (const auto& s : p.rhs) r += s.id;
        rules.insert(r);
    }
    CHECK(rules.count("A_ur->aA_urc"));
    CHECK(rules.count("A_ur->bA_ur"));
    CHECK(rules.count("A_ur->A_urb"));
    CHECK(rules.count("A_ur->ac"));
    CHECK(rules.count("A_ur->b"));
}

TEST_CASE("builtin m-rectangle contains the turn structure") {
    const Grammar g = builtin_patterns().at("mrect_cl");
    std::set<std::string> rules;
    for (const auto& p : g.productions()) {
        std::string r = p.lhs + "->";
        for (const auto& s : p.rhs) r += s.id;
        rules.insert(r);
    }
    CHECK(rules.count("R_cl->T_clL_h"));
    CHECK(rules.count("T_cl->bT_clf"));
    CHECK(rules.count("T_cl->L_d"));
}

TEST_CASE("grammar text format round-trips") {
    const Grammar g = builtin_patterns().at("arc_ur");
    const Grammar back = parse_grammar_text(format_grammar_text(g));
    CHECK(back.terminals() == g.terminals());
    CHECK(back.nonterminals() == g.nonterminals());
    CHECK(back.start() == g.start());
    REQUIRE(back.productions().size() == g.productions().size());
    for (std::size_t i = 0; i < g.productions().size(); ++i) {
        CHECK(back.productions()[i].lhs == g.productions()[i].lhs);
        CHECK(back.productions()[i].rhs == g.productions()[i].rhs);
        CHECK(back.productions()[i].prob == doctest::Approx(g.productions()[i].prob));
    }
}

TEST_CASE("grammar text errors carry line numbers") {
    CHECK_THROWS_WITH_AS(parse_grammar_text("%start S\nS -> a @ oops\n"),
                         doctest::Contains("line 2"), GrammarError);
    CHECK_THROWS_WITH_AS(parse_grammar_text("%start S\n%terminals a\nS -> q @ 1.0\n"),
                         doctest::Contains("line 3"), GrammarError);
}

TEST_CASE("grammar json format round-trips") {
    const Grammar g = builtin_patterns().at("mrect_cc");
    const Grammar back = grammar_from_json_string(grammar_to_json_string(g));
    CHECK(back.terminals() == g.terminals());
    CHECK(back.start() == g.start());
    REQUIRE(back.productions().size() == g.productions().size());
    CHECK(back.productions()[2].rhs == g.productions()[2].rhs);
}

TEST_CASE("per-lhs probabilities sum to one for every builtin") {
    auto patterns = builtin_patterns();
    patterns.emplace("lines", builtin_lines_grammar());
    for (const auto& [name, g] : patterns)
        for (const auto& nt : g.nonterminals()) {
            double sum = 0.0;
            for (int r : g.productions_of(nt)) sum += g.productions()[r].prob;
            INFO(name, " ", nt);
            CHECK(std::abs(sum - 1.0) < 1e-9);
        }
}

TEST_CASE("sampled line lengths have the geometric mean") {
    const Grammar g = line_grammar(0.5);
    RandomStream rng(1234);
    double total = 0.0;
    const int trials = 100000;
    for (int i = 0; i < trials; ++i) total += double(sample_derivation(g, rng, 100000).size());
    CHECK(total / trials == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("subcritical builtins sample without hitting the depth cap") {
    RandomStream rng(99);
    for (const auto& [name, g] : builtin_patterns()) {
        INFO(name);
        for (int i = 0; i < 2000; ++i) CHECK_NOTHROW(sample_derivation(g, rng, 100000));
    }
}
