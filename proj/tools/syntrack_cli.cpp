// syntrack command line: simulate trajectories, classify detection streams,
// validate grammars.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "syntrack/classifier.hpp"
#include "syntrack/grammar.hpp"
#include "syntrack/inside.hpp"
#include "syntrack/parser.hpp"
#include "syntrack/simulator.hpp"

namespace fs = std::filesystem;
using namespace syntrack;

namespace {

constexpr const char* kVersion = "0.1.0";

int exit_validation() { return 1; }
int exit_runtime() { return 2; }
int exit_unclassified() { return 3; }

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << content;
}

std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

// Layered key=value config: file first, flags override.
std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::map<std::string, std::string> out;
    std::istringstream is(read_file(path));
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            std::istringstream probe(line);
            std::string tok;
            if (probe >> tok)
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": expected key = value");
            continue;
        }
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        out[key] = value;
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config field " + key + ": bad number '" + v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config field " + key + ": bad flag '" + v + "'");
}

void apply_noise_key(NoiseConfig& noise, const std::string& key, const std::string& value,
                     bool& known) {
    known = true;
    if (key == "sigma_r") noise.sigma_r = to_double(key, value);
    else if (key == "sigma_rdot") noise.sigma_rdot = to_double(key, value);
    else if (key == "sigma_theta_deg") noise.sigma_theta = to_double(key, value) * M_PI / 180.0;
    else if (key == "sigma_theta") noise.sigma_theta = to_double(key, value);
    else if (key == "sigma_along") noise.sigma_along = to_double(key, value);
    else if (key == "sigma_ortho") noise.sigma_ortho = to_double(key, value);
    else if (key == "literal_noise_pairing") noise.literal_noise_pairing = to_bool(key, value);
    else if (key == "T") noise.T = to_double(key, value);
    else known = false;
}

void apply_scenario_key(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    bool known = false;
    apply_noise_key(cfg.noise, key, value, known);
    if (known) return;
    if (key == "grammar") cfg.grammar = value;
    else if (key == "modes") cfg.modes = value;
    else if (key == "speed") cfg.speed = to_double(key, value);
    else if (key == "p_detect") cfg.p_detect = to_double(key, value);
    else if (key == "seed") cfg.seed = std::uint64_t(to_double(key, value));
    else if (key == "scans_per_mode") cfg.scans_per_mode = int(to_double(key, value));
    else if (key == "steer") {
        if (value == "hard") cfg.steer = ScenarioConfig::Steering::Hard;
        else if (value == "soft") cfg.steer = ScenarioConfig::Steering::Soft;
        else throw std::invalid_argument("config field steer: expected hard|soft");
    } else if (key == "max_depth") cfg.max_depth = int(to_double(key, value));
    else if (key == "min_terminals") cfg.min_terminals = int(to_double(key, value));
    else if (key == "max_terminals") cfg.max_terminals = int(to_double(key, value));
    else if (key == "start_x") cfg.start_x = to_double(key, value);
    else if (key == "start_y") cfg.start_y = to_double(key, value);
    else if (key == "platform_x") cfg.platform.x = to_double(key, value);
    else if (key == "platform_y") cfg.platform.y = to_double(key, value);
    else if (key == "platform_z") cfg.platform.z = to_double(key, value);
    else if (key == "platform_vx") cfg.platform.vx = to_double(key, value);
    else if (key == "platform_vy") cfg.platform.vy = to_double(key, value);
    else if (key == "pincer_offset") cfg.pincer_offset = to_double(key, value);
    else if (key == "allow_supercritical") cfg.allow_supercritical = to_bool(key, value);
    else if (key == "scenario") { /* handled by caller */ }
    else throw std::invalid_argument("unknown scenario config field: " + key);
}

void apply_classifier_key(ClassifierConfig& cfg, const std::string& key, const std::string& value) {
    bool known = false;
    apply_noise_key(cfg.noise, key, value, known);
    if (known) return;
    if (key == "patterns") {
        cfg.patterns.clear();
        std::istringstream is(value);
        std::string name;
        while (std::getline(is, name, ','))
            if (!name.empty()) cfg.patterns.push_back(name);
    } else if (key == "tracker") {
        if (value == "imm") cfg.tracker = ClassifierConfig::Tracker::Imm;
        else if (value == "pf") cfg.tracker = ClassifierConfig::Tracker::Pf;
        else throw std::invalid_argument("config field tracker: expected imm|pf");
    } else if (key == "feedback") cfg.feedback = to_bool(key, value);
    else if (key == "feedback_weight") cfg.feedback_weight = cfg.imm.feedback_weight = to_double(key, value);
    else if (key == "feedback_mix_patterns") cfg.feedback_mix_patterns = to_bool(key, value);
    else if (key == "nd_prob") cfg.nd_prob = to_double(key, value);
    else if (key == "prune") cfg.prune_offset = to_double(key, value);
    else if (key == "theta1") cfg.association.theta1 = cfg.chart_similarity.theta1 = to_double(key, value);
    else if (key == "theta2") cfg.association.theta2 = cfg.chart_similarity.theta2 = to_double(key, value);
    else if (key == "spawn_threshold") cfg.spawn_threshold = to_double(key, value);
    else if (key == "pf_particles") cfg.pf_particles = int(to_double(key, value));
    else if (key == "pf_seed") cfg.pf_seed = std::uint64_t(to_double(key, value));
    else if (key == "chart_similarity") {
        if (value == "off") cfg.chart_similarity.anchor = SimilarityConfig::Anchor::Off;
        else if (value == "high_high") cfg.chart_similarity.anchor = SimilarityConfig::Anchor::HighHigh;
        else if (value == "high_low") cfg.chart_similarity.anchor = SimilarityConfig::Anchor::HighLow;
        else throw std::invalid_argument("config field chart_similarity: expected off|high_high|high_low");
    } else if (key == "steered_tracker") cfg.imm.steered = cfg.pf.steered = to_bool(key, value);
    else throw std::invalid_argument("unknown classifier config field: " + key);
}

nlohmann::json noise_json(const NoiseConfig& n) {
    return {{"sigma_r", n.sigma_r},       {"sigma_rdot", n.sigma_rdot},
            {"sigma_theta", n.sigma_theta}, {"sigma_along", n.sigma_along},
            {"sigma_ortho", n.sigma_ortho}, {"literal_noise_pairing", n.literal_noise_pairing},
            {"T", n.T}};
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const nlohmann::json& config, const std::map<std::string, std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    nlohmann::json j;
    j["tool"] = "syntrack";
    j["version"] = kVersion;
    j["command"] = command;
    j["config"] = config;
    auto& in = j["inputs"] = nlohmann::json::object();
    for (const auto& [path, hash] : inputs) in[path] = hash;
    j["outputs"] = outputs;
    write_file(out_dir / "manifest.json", j.dump(2) + "\n");
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
    std::string config_path;
    std::string out_dir;
    std::string format = "jsonl";
    std::string scenario = "single";
    ScenarioConfig cfg;
    bool seed_set = false, grammar_set = false, spm_set = false;
    std::uint64_t seed = 0;
    std::string grammar;
    int scans_per_mode = 0;
};

int run_simulate(SimulateArgs& args) {
    if (!args.config_path.empty()) {
        auto kv = parse_config_file(args.config_path);
        if (auto it = kv.find("scenario"); it != kv.end()) args.scenario = it->second;
        for (const auto& [k, v] : kv) apply_scenario_key(args.cfg, k, v);
    }
    if (args.seed_set) args.cfg.seed = args.seed;
    if (args.grammar_set) args.cfg.grammar = args.grammar;
    if (args.spm_set) args.cfg.scans_per_mode = args.scans_per_mode;
    if (args.scenario != "single" && args.scenario != "pincer")
        throw std::invalid_argument("scenario: expected single|pincer");

    const SimulationResult sim =
        args.scenario == "pincer" ? scenario_pincer(args.cfg) : simulate(args.cfg);

    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    std::vector<std::string> outputs;
    if (args.format == "csv") {
        write_file(out / "detections.csv", detections_to_csv(sim.detections));
        outputs.push_back("detections.csv");
    } else if (args.format == "jsonl") {
        std::ostringstream os;
        for (const auto& d : sim.detections) os << detection_to_json_line(d) << "\n";
        write_file(out / "detections.jsonl", os.str());
        outputs.push_back("detections.jsonl");
    } else {
        throw std::invalid_argument("format: expected jsonl|csv");
    }
    write_file(out / "truth.json", truth_to_json_string(sim));
    outputs.push_back("truth.json");

    nlohmann::json config;
    config["scenario"] = args.scenario;
    config["grammar"] = args.cfg.grammar;
    config["modes"] = args.cfg.modes;
    config["speed"] = args.cfg.speed;
    config["p_detect"] = args.cfg.p_detect;
    config["seed"] = args.cfg.seed;
    config["scans_per_mode"] = args.cfg.scans_per_mode;
    config["steer"] = args.cfg.steer == ScenarioConfig::Steering::Hard ? "hard" : "soft";
    config["max_depth"] = args.cfg.max_depth;
    config["min_terminals"] = args.cfg.min_terminals;
    config["max_terminals"] = args.cfg.max_terminals;
    config["start"] = {args.cfg.start_x, args.cfg.start_y};
    config["platform"] = {{"x", args.cfg.platform.x}, {"y", args.cfg.platform.y},
                          {"z", args.cfg.platform.z}, {"vx", args.cfg.platform.vx},
                          {"vy", args.cfg.platform.vy}};
    config["pincer_offset"] = args.cfg.pincer_offset;
    config["allow_supercritical"] = args.cfg.allow_supercritical;
    config["noise"] = noise_json(args.cfg.noise);
    config["format"] = args.format;

    std::map<std::string, std::string> inputs;
    if (!args.config_path.empty()) inputs[args.config_path] = fnv1a_hex(read_file(args.config_path));
    write_manifest(out, "simulate", config, inputs, outputs);
    std::cerr << "simulate: " << sim.detections.size() << " detections, " << sim.tracks.size()
              << " track(s) -> " << args.out_dir << "\n";
    return 0;
}

// ---- classify ----------------------------------------------------------------

struct ClassifyArgs {
    std::string config_path;
    std::string detections_path;
    std::string hard_modes;
    std::string out_dir;
    bool dump_chart = false;
    ClassifierConfig cfg;
    std::vector<std::string> grammars;  // --grammar repeatable
    bool tracker_set = false, feedback_set = false, prune_set = false;
    bool theta1_set = false, theta2_set = false;
    std::string tracker = "imm", feedback = "off";
    double prune = 20.0, theta1 = 50.0, theta2 = 1.5;
};

int run_classify(ClassifyArgs& args) {
    if (!args.config_path.empty())
        for (const auto& [k, v] : parse_config_file(args.config_path))
            apply_classifier_key(args.cfg, k, v);
    if (!args.grammars.empty()) args.cfg.patterns = args.grammars;
    if (args.tracker_set) apply_classifier_key(args.cfg, "tracker", args.tracker);
    if (args.feedback_set) apply_classifier_key(args.cfg, "feedback", args.feedback);
    if (args.prune_set) args.cfg.prune_offset = args.prune;
    if (args.theta1_set) apply_classifier_key(args.cfg, "theta1", std::to_string(args.theta1));
    if (args.theta2_set) apply_classifier_key(args.cfg, "theta2", std::to_string(args.theta2));

    if (args.detections_path.empty() == args.hard_modes.empty())
        throw std::invalid_argument("classify: exactly one of --detections / --hard-modes required");

    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    std::vector<std::string> outputs;
    std::map<std::string, std::string> inputs;
    if (!args.config_path.empty()) inputs[args.config_path] = fnv1a_hex(read_file(args.config_path));

    nlohmann::json config;
    config["patterns"] = args.cfg.patterns;
    config["feedback"] = args.cfg.feedback;
    config["feedback_weight"] = args.cfg.feedback_weight;
    config["tracker"] = args.cfg.tracker == ClassifierConfig::Tracker::Imm ? "imm" : "pf";
    config["nd_prob"] = args.cfg.nd_prob;
    config["prune"] = args.cfg.prune_offset;
    config["theta1"] = args.cfg.association.theta1;
    config["theta2"] = args.cfg.association.theta2;
    config["spawn_threshold"] = args.cfg.spawn_threshold;
    config["pf_particles"] = args.cfg.pf_particles;
    config["pf_seed"] = args.cfg.pf_seed;
    config["noise"] = noise_json(args.cfg.noise);
    config["hard_modes"] = args.hard_modes;
    config["detections"] = args.detections_path;

    int exit_code = 0;
    if (!args.hard_modes.empty()) {
        // Tracker bypass: parse the mode string directly.
        std::map<std::string, Grammar> patterns;
        if (args.cfg.patterns.empty())
            patterns = builtin_patterns();
        else
            for (const auto& name : args.cfg.patterns) patterns.emplace(name, load_grammar(name));
        const auto modes = split_terminal_string(args.hard_modes);
        const auto result = classify_hard_modes(modes, patterns);

        std::ostringstream trace;
        trace.precision(17);
        trace << "hypothesis,scan,detection_t,miss,pattern,log_prob,posterior,map_label\n";
        for (const auto& row : result.trace.rows)
            for (const auto& [name, lp] : row.log_prefix)
                trace << 0 << ',' << row.scan << ',' << row.detection_t << ",0," << name << ','
                      << lp << ',' << row.posterior.at(name) << ',' << row.map_label << "\n";
        write_file(out / "trace.csv", trace.str());
        outputs.push_back("trace.csv");

        nlohmann::json labels;
        labels["hypotheses"] = {{{"id", 0}, {"map", result.map_label}, {"unparseable", result.map_label == "unclassified"}}};
        write_file(out / "labels.json", labels.dump(2) + "\n");
        outputs.push_back("labels.json");

        fs::create_directories(out / "trees");
        for (const auto& [name, chart] : result.charts) {
            if (auto tree = viterbi_parse(chart)) {
                write_file(out / "trees" / (name + ".txt"), parse_tree_text(tree->root));
                write_file(out / "trees" / (name + ".json"), parse_tree_json_string(*tree));
                outputs.push_back("trees/" + name + ".txt");
                outputs.push_back("trees/" + name + ".json");
            }
        }
        if (args.dump_chart) {
            for (const auto& [name, chart] : result.charts) {
                write_file(out / ("chart_" + name + ".jsonl"), dump_chart(chart));
                outputs.push_back("chart_" + name + ".jsonl");
            }
        }
        if (result.map_label == "unclassified") exit_code = exit_unclassified();
    } else {
        inputs[args.detections_path] = fnv1a_hex(read_file(args.detections_path));
        std::vector<Detection> stream;
        stream = load_detections(args.detections_path);
        Pipeline pipeline(args.cfg);
        pipeline.process(stream);

        write_file(out / "trace.csv", trace_to_csv(pipeline.hypotheses()));
        outputs.push_back("trace.csv");
        write_file(out / "track.jsonl", track_output_jsonl(pipeline.hypotheses()));
        outputs.push_back("track.jsonl");

        nlohmann::json labels;
        auto& hyps = labels["hypotheses"] = nlohmann::json::array();
        bool any_classified = false;
        for (const auto& h : pipeline.hypotheses()) {
            const std::string label = classify_map(h.trace);
            if (label != "unclassified") any_classified = true;
            hyps.push_back({{"id", h.id}, {"map", label}, {"unparseable", h.unparseable}});
        }
        write_file(out / "labels.json", labels.dump(2) + "\n");
        outputs.push_back("labels.json");

        fs::create_directories(out / "trees");
        for (const auto& h : pipeline.hypotheses()) {
            const std::string label = classify_map(h.trace);
            if (label == "unclassified") continue;
            const auto& chart = h.charts.at(label);
            if (auto tree = viterbi_parse(chart)) {
                const std::string stem = "hyp" + std::to_string(h.id) + "_" + label;
                write_file(out / "trees" / (stem + ".txt"), parse_tree_text(tree->root));
                write_file(out / "trees" / (stem + ".json"), parse_tree_json_string(*tree));
                outputs.push_back("trees/" + stem + ".txt");
                outputs.push_back("trees/" + stem + ".json");
            }
        }
        if (args.dump_chart)
            for (const auto& h : pipeline.hypotheses())
                for (const auto& [name, chart] : h.charts) {
                    const std::string fname = "chart_hyp" + std::to_string(h.id) + "_" + name + ".jsonl";
                    write_file(out / fname, dump_chart(chart));
                    outputs.push_back(fname);
                }
        if (!any_classified) exit_code = exit_unclassified();
    }
    write_manifest(out, "classify", config, inputs, outputs);
    return exit_code;
}

// ---- validate ----------------------------------------------------------------

int run_validate(const std::string& grammar_arg) {
    const Grammar g = load_grammar(grammar_arg);
    const auto violations = validate(g);
    if (!violations.empty()) {
        std::cout << "invalid: " << violations.size() << " violation(s)\n";
        for (const auto& v : violations) std::cout << "  [" << v.code << "] " << v.detail << "\n";
        return exit_validation();
    }
    std::cout << "valid: " << g.nonterminals().size() << " nonterminals, " << g.terminals().size()
              << " terminals, " << g.productions().size() << " productions\n";

    const auto mm = mean_matrix(g);
    std::cout << "mean matrix (rows rewrite, columns offspring):\n      ";
    for (const auto& n : mm.order) std::cout << n << ' ';
    std::cout << "\n";
    for (std::size_t r = 0; r < mm.order.size(); ++r) {
        std::cout << "  " << mm.order[r] << ":";
        for (std::size_t c = 0; c < mm.order.size(); ++c) std::cout << ' ' << mm.m(r, c);
        std::cout << "\n";
    }
    const auto wp = is_well_posed(g);
    std::cout << "spectral radius: " << wp.radius << "\n"
              << (wp.subcritical ? "subcritical: derivations terminate almost surely\n"
                                 : "NOT subcritical: sampling requires an explicit depth cap\n");
    return wp.subcritical ? 0 : exit_validation();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"syntactic trajectory tracking toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* cmd_sim = app.add_subcommand("simulate", "Generate a detection stream with truth sidecar");
    cmd_sim->add_option("--config", sim.config_path, "Scenario config file (key = value lines)");
    cmd_sim->add_option("--out", sim.out_dir, "Output directory")->required();
    cmd_sim->add_option("--scenario", sim.scenario, "single|pincer");
    cmd_sim->add_option("--format", sim.format, "jsonl|csv (default jsonl)");
    auto* so_seed = cmd_sim->add_option("--seed", sim.seed, "RNG seed override");
    auto* so_grammar = cmd_sim->add_option("--grammar", sim.grammar, "Builtin name or grammar file");
    auto* so_spm = cmd_sim->add_option("--scans-per-mode", sim.scans_per_mode, "Scans per grammar terminal");

    ClassifyArgs cls;
    auto* cmd_cls = app.add_subcommand("classify", "Track and classify a detection stream");
    cmd_cls->add_option("--config", cls.config_path, "Classifier config file");
    cmd_cls->add_option("--detections", cls.detections_path, "Detection stream (.jsonl or .csv)");
    cmd_cls->add_option("--hard-modes", cls.hard_modes, "Parse a hard mode string, bypassing the tracker");
    cmd_cls->add_option("--out", cls.out_dir, "Output directory")->required();
    cmd_cls->add_option("--grammar", cls.grammars, "Pattern grammar (repeatable; default all builtins)");
    cmd_cls->add_flag("--dump-chart", cls.dump_chart, "Write per-pattern chart dumps");
    auto* co_tracker = cmd_cls->add_option("--tracker", cls.tracker, "imm|pf");
    auto* co_feedback = cmd_cls->add_option("--feedback", cls.feedback, "on|off");
    auto* co_prune = cmd_cls->add_option("--prune", cls.prune, "Pruning offset in nats (inf to disable)");
    auto* co_theta1 = cmd_cls->add_option("--theta1", cls.theta1, "Similarity scale, meters");
    auto* co_theta2 = cmd_cls->add_option("--theta2", cls.theta2, "Similarity exponent in (0,2]");

    std::string validate_grammar;
    auto* cmd_val = app.add_subcommand("validate", "Validate a grammar and report well-posedness");
    cmd_val->add_option("--grammar", validate_grammar, "Builtin name or grammar file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (cmd_sim->parsed()) {
            sim.seed_set = so_seed->count() > 0;
            sim.grammar_set = so_grammar->count() > 0;
            sim.spm_set = so_spm->count() > 0;
            return run_simulate(sim);
        }
        if (cmd_cls->parsed()) {
            cls.tracker_set = co_tracker->count() > 0;
            cls.feedback_set = co_feedback->count() > 0;
            cls.prune_set = co_prune->count() > 0;
            cls.theta1_set = co_theta1->count() > 0;
            cls.theta2_set = co_theta2->count() > 0;
            return run_classify(cls);
        }
        if (cmd_val->parsed()) return run_validate(validate_grammar);
    } catch (const GrammarError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation();
    } catch (const SimulationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation();
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_validation();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_runtime();
    }
    return exit_runtime();
}
