// pybind11 surface over the core library: grammar analysis, parsing,
// kinematics, trackers, simulation, and the classification pipeline.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "syntrack/classifier.hpp"
#include "syntrack/grammar.hpp"
#include "syntrack/inside.hpp"
#include "syntrack/parser.hpp"
#include "syntrack/simulator.hpp"
#include "syntrack/tracker.hpp"

namespace py = pybind11;
using namespace syntrack;

namespace {

Grammar grammar_from_rules(const std::vector<std::string>& terminals,
                           const std::vector<std::string>& nonterminals,
                           const std::vector<std::tuple<std::string, std::vector<std::string>, double>>& rules,
                           const std::string& start) {
    std::vector<Production> ps;
    std::set<std::string> nts(nonterminals.begin(), nonterminals.end());
    for (const auto& [lhs, rhs, prob] : rules) {
        Production p;
        p.lhs = lhs;
        p.prob = prob;
        for (const auto& sym : rhs)
            p.rhs.push_back(nts.count(sym) ? Symbol::nonterminal(sym) : Symbol::terminal(sym));
        ps.push_back(std::move(p));
    }
    return Grammar(terminals, nonterminals, std::move(ps), start);
}

struct PyParseResult {
    double sentence_probability = 0.0;
    std::vector<double> prefix_probabilities;
    std::string chart_dump;
    std::string viterbi_text;
    double viterbi_log_prob = 0.0;
    bool has_parse = false;
};

PyParseResult parse_modes(const Grammar& g, const std::string& modes) {
    PyParseResult out;
    auto tables = make_parser_tables(g);
    ChartOptions opts;
    opts.similarity.anchor = SimilarityConfig::Anchor::Off;
    Chart chart = init_chart(tables, KinematicState{}, opts);
    const auto symbols = split_terminal_string(modes);
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        if (chart.dead()) break;
        scan(chart, SoftTerminal::hard(symbols[k], int(k)));
        if (chart.dead()) break;
        complete(chart, chart.frontier(), opts.similarity, opts.prune_offset);
        if (k + 1 < symbols.size()) predict(chart, chart.frontier(), opts.prune_offset);
        out.prefix_probabilities.push_back(prefix_probability(chart, chart.frontier()));
    }
    out.sentence_probability = chart.dead() ? 0.0 : sentence_probability(chart);
    out.chart_dump = dump_chart(chart);
    if (auto tree = viterbi_parse(chart)) {
        out.has_parse = true;
        out.viterbi_text = parse_tree_text(tree->root);
        out.viterbi_log_prob = tree->log_prob;
    }
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Syntactic trajectory tracking core";

    py::register_exception<GrammarError>(m, "GrammarError", PyExc_ValueError);
    py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);

    py::class_<Grammar>(m, "Grammar")
        .def(py::init(&grammar_from_rules), py::arg("terminals"), py::arg("nonterminals"),
             py::arg("rules"), py::arg("start"))
        .def_property_readonly("terminals", &Grammar::terminals)
        .def_property_readonly("nonterminals", &Grammar::nonterminals)
        .def_property_readonly("start", &Grammar::start)
        .def("__repr__", [](const Grammar& g) {
            return "<Grammar " + std::to_string(g.productions().size()) + " rules, start=" +
                   g.start() + ">";
        });

    m.def("load_grammar", &load_grammar, py::arg("name_or_path"),
          "Builtin grammar by name, or load from a text/.json file");
    m.def("builtin_patterns", [] {
        std::vector<std::string> names;
        for (const auto& [name, _] : builtin_patterns()) names.push_back(name);
        return names;
    });
    m.def("grammar_text", &format_grammar_text);
    m.def("grammar_json", &grammar_to_json_string);
    m.def("parse_grammar_text", &parse_grammar_text);
    m.def("validate", [](const Grammar& g) {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& v : validate(g)) out.emplace_back(v.code, v.detail);
        return out;
    });
    m.def("mean_matrix", [](const Grammar& g) {
        const auto mm = mean_matrix(g);
        return std::make_pair(mm.m, mm.order);
    });
    m.def("spectral_radius", [](const Eigen::MatrixXd& mat) {
        const auto r = spectral_radius(mat);
        return std::make_tuple(r.value, r.converged, r.iterations);
    });
    m.def("is_well_posed", [](const Grammar& g) {
        const auto wp = is_well_posed(g);
        return std::make_pair(wp.subcritical, wp.radius);
    });
    m.def("augment_nondetection", &augment_nondetection, py::arg("grammar"), py::arg("nd_symbol"),
          py::arg("nd_prob"));
    m.def("inside_probability",
          py::overload_cast<const Grammar&, const std::string&>(&inside_probability),
          py::arg("grammar"), py::arg("modes"));
    m.def("sample_derivation", [](const Grammar& g, std::uint64_t seed, int max_depth) {
        RandomStream rng(seed);
        return sample_derivation(g, rng, max_depth);
    }, py::arg("grammar"), py::arg("seed"), py::arg("max_depth") = 10000);

    py::class_<PyParseResult>(m, "ParseResult")
        .def_readonly("sentence_probability", &PyParseResult::sentence_probability)
        .def_readonly("prefix_probabilities", &PyParseResult::prefix_probabilities)
        .def_readonly("chart_dump", &PyParseResult::chart_dump)
        .def_readonly("viterbi_text", &PyParseResult::viterbi_text)
        .def_readonly("viterbi_log_prob", &PyParseResult::viterbi_log_prob)
        .def_readonly("has_parse", &PyParseResult::has_parse);
    m.def("parse_modes", &parse_modes, py::arg("grammar"), py::arg("modes"),
          "Parse a hard terminal string; similarity and pruning off");

    m.def("similarity", [](double d, double theta1, double theta2) {
        return similarity(d, SimilarityConfig{theta1, theta2});
    }, py::arg("distance"), py::arg("theta1") = 50.0, py::arg("theta2") = 1.5);

    // Kinematics.
    py::class_<NoiseConfig>(m, "NoiseConfig")
        .def(py::init<>())
        .def_readwrite("sigma_along", &NoiseConfig::sigma_along)
        .def_readwrite("sigma_ortho", &NoiseConfig::sigma_ortho)
        .def_readwrite("sigma_r", &NoiseConfig::sigma_r)
        .def_readwrite("sigma_rdot", &NoiseConfig::sigma_rdot)
        .def_readwrite("sigma_theta", &NoiseConfig::sigma_theta)
        .def_readwrite("T", &NoiseConfig::T)
        .def_readwrite("literal_noise_pairing", &NoiseConfig::literal_noise_pairing);

    m.def("transition_matrices", [](double T) {
        const auto tm = transition_matrices(T);
        return std::make_pair(Eigen::MatrixXd(tm.F), Eigen::MatrixXd(tm.G));
    }, py::arg("T"));
    m.def("mode_noise_cov", [](const std::string& mode, const NoiseConfig& cfg) {
        return Eigen::MatrixXd(mode_noise_cov(mode_direction(mode), cfg));
    }, py::arg("mode"), py::arg("noise") = NoiseConfig{});
    m.def("mode_angle", [](const std::string& mode) { return mode_direction(mode).angle; });

    py::class_<Platform>(m, "Platform")
        .def(py::init<>())
        .def_readwrite("x", &Platform::x)
        .def_readwrite("y", &Platform::y)
        .def_readwrite("z", &Platform::z)
        .def_readwrite("vx", &Platform::vx)
        .def_readwrite("vy", &Platform::vy);

    py::class_<KinematicState>(m, "KinematicState")
        .def(py::init<>())
        .def_readwrite("x", &KinematicState::x)
        .def_readwrite("y", &KinematicState::y)
        .def_readwrite("vx", &KinematicState::vx)
        .def_readwrite("vy", &KinematicState::vy)
        .def_readwrite("cov", &KinematicState::cov)
        .def_readwrite("t", &KinematicState::t);

    py::class_<Detection>(m, "Detection")
        .def(py::init<>())
        .def_readwrite("r", &Detection::r)
        .def_readwrite("rdot", &Detection::rdot)
        .def_readwrite("theta", &Detection::theta)
        .def_readwrite("platform", &Detection::platform)
        .def_readwrite("t", &Detection::t)
        .def_readwrite("is_miss", &Detection::is_miss);

    m.def("observe", [](const KinematicState& s, const Platform& p) {
        const auto r = observe(s, p);
        return std::make_tuple(r.r, r.rdot, r.theta);
    });
    m.def("convert_measurement", [](const Detection& d, const NoiseConfig& cfg) {
        const auto c = convert_measurement(d, cfg);
        return std::make_pair(Eigen::VectorXd(c.z), Eigen::MatrixXd(c.R));
    });
    m.def("measurement_jacobian", [](const KinematicState& s, const Platform& p) {
        return Eigen::MatrixXd(measurement_jacobian(s, p));
    });
    m.def("feedback_mix", &feedback_mix, py::arg("rg_probs"), py::arg("cfg_probs"),
          py::arg("weight_cfg") = 0.5);

    // Simulation.
    py::class_<ScenarioConfig>(m, "ScenarioConfig")
        .def(py::init<>())
        .def_readwrite("grammar", &ScenarioConfig::grammar)
        .def_readwrite("modes", &ScenarioConfig::modes)
        .def_readwrite("speed", &ScenarioConfig::speed)
        .def_readwrite("noise", &ScenarioConfig::noise)
        .def_readwrite("p_detect", &ScenarioConfig::p_detect)
        .def_readwrite("platform", &ScenarioConfig::platform)
        .def_readwrite("seed", &ScenarioConfig::seed)
        .def_readwrite("scans_per_mode", &ScenarioConfig::scans_per_mode)
        .def_readwrite("max_depth", &ScenarioConfig::max_depth)
        .def_readwrite("min_terminals", &ScenarioConfig::min_terminals)
        .def_readwrite("max_terminals", &ScenarioConfig::max_terminals)
        .def_readwrite("start_x", &ScenarioConfig::start_x)
        .def_readwrite("start_y", &ScenarioConfig::start_y)
        .def_readwrite("pincer_offset", &ScenarioConfig::pincer_offset);

    py::class_<TruthTrack>(m, "TruthTrack")
        .def_readonly("label", &TruthTrack::label)
        .def_readonly("modes", &TruthTrack::modes)
        .def_readonly("scan_modes", &TruthTrack::scan_modes)
        .def_readonly("states", &TruthTrack::states);

    py::class_<SimulationResult>(m, "SimulationResult")
        .def_readonly("detections", &SimulationResult::detections)
        .def_readonly("tracks", &SimulationResult::tracks)
        .def("truth_json", [](const SimulationResult& s) { return truth_to_json_string(s); });

    m.def("simulate", &simulate, py::arg("config"));
    m.def("scenario_pincer", &scenario_pincer, py::arg("config"));
    m.def("detection_json", &detection_to_json_line);

    // Classification pipeline.
    py::class_<ClassifierConfig> cc(m, "ClassifierConfig");
    cc.def(py::init<>())
        .def_readwrite("patterns", &ClassifierConfig::patterns)
        .def_readwrite("feedback", &ClassifierConfig::feedback)
        .def_readwrite("feedback_weight", &ClassifierConfig::feedback_weight)
        .def_readwrite("nd_prob", &ClassifierConfig::nd_prob)
        .def_readwrite("noise", &ClassifierConfig::noise)
        .def_readwrite("pf_particles", &ClassifierConfig::pf_particles)
        .def_readwrite("pf_seed", &ClassifierConfig::pf_seed)
        .def_readwrite("prune_offset", &ClassifierConfig::prune_offset)
        .def_property(
            "tracker",
            [](const ClassifierConfig& c) {
                return c.tracker == ClassifierConfig::Tracker::Imm ? "imm" : "pf";
            },
            [](ClassifierConfig& c, const std::string& v) {
                if (v == "imm") c.tracker = ClassifierConfig::Tracker::Imm;
                else if (v == "pf") c.tracker = ClassifierConfig::Tracker::Pf;
                else throw std::invalid_argument("tracker: expected imm|pf");
            });

    py::class_<TraceRow>(m, "TraceRow")
        .def_readonly("scan", &TraceRow::scan)
        .def_readonly("detection_t", &TraceRow::detection_t)
        .def_readonly("miss", &TraceRow::miss)
        .def_readonly("log_prefix", &TraceRow::log_prefix)
        .def_readonly("posterior", &TraceRow::posterior)
        .def_readonly("map_label", &TraceRow::map_label)
        .def_readonly("mode_probs", &TraceRow::mode_probs)
        .def_readonly("covariance_trace", &TraceRow::covariance_trace);

    py::class_<Pipeline>(m, "Pipeline")
        .def(py::init<ClassifierConfig>(), py::arg("config") = ClassifierConfig{})
        .def("process", &Pipeline::process, py::arg("detections"))
        .def("labels", [](const Pipeline& p) {
            std::vector<std::string> out;
            for (const auto& h : p.hypotheses()) out.push_back(classify_map(h.trace));
            return out;
        })
        .def("trace_rows", [](const Pipeline& p, int hypothesis) {
            return p.hypotheses().at(hypothesis).trace.rows;
        }, py::arg("hypothesis") = 0)
        .def("hypothesis_count", [](const Pipeline& p) { return p.hypotheses().size(); });

    m.def("classify_hard_modes", [](const std::string& modes, const std::vector<std::string>& patterns) {
        std::map<std::string, Grammar> gs;
        if (patterns.empty())
            gs = builtin_patterns();
        else
            for (const auto& name : patterns) gs.emplace(name, load_grammar(name));
        const auto res = classify_hard_modes(split_terminal_string(modes), gs);
        return std::make_pair(res.map_label, res.trace.rows);
    }, py::arg("modes"), py::arg("patterns") = std::vector<std::string>{});

    m.attr("__version__") = "0.1.0";
}
