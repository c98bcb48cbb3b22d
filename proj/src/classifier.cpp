#include "syntrack/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "syntrack/logprob.hpp"

namespace syntrack {

namespace {

std::string argmax_label(const std::map<std::string, double>& scores) {
    std::string best;
    double best_v = kLogZero;
    for (const auto& [name, v] : scores)
        if (v > best_v) {
            best_v = v;
            best = name;
        }
    return best_v == kLogZero ? "unclassified" : best;
}

std::map<std::string, double> normalize_log(const std::map<std::string, double>& logp) {
    double total = kLogZero;
    for (const auto& [_, lp] : logp) total = log_add(total, lp);
    std::map<std::string, double> out;
    for (const auto& [name, lp] : logp)
        out[name] = (total == kLogZero || lp == kLogZero) ? 0.0 : std::exp(lp - total);
    return out;
}

}  // namespace

std::string classify_map(const PatternLikelihoodTrace& trace) {
    if (trace.rows.empty()) return "unclassified";
    return argmax_label(trace.rows.back().log_prefix);
}

Pipeline::Pipeline(ClassifierConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.noise.require_positive();
    if (cfg_.patterns.empty())
        for (const auto& [name, _] : builtin_patterns()) cfg_.patterns.push_back(name);
    const auto builtins = builtin_patterns();
    for (const auto& name : cfg_.patterns) {
        Grammar g = builtins.count(name) ? builtins.at(name) : load_grammar(name);
        if (cfg_.nd_prob > 0.0) g = augment_nondetection(g, cfg_.nd_symbol, cfg_.nd_prob);
        tables_.emplace(name, make_parser_tables(g));
    }
}

ChartOptions Pipeline::chart_options() const {
    ChartOptions opts;
    opts.prune_offset = cfg_.prune_offset;
    opts.similarity = cfg_.chart_similarity;
    return opts;
}

int Pipeline::associate(const Detection& d, const std::set<int>& exclude) const {
    if (d.is_miss) return -1;
    const auto conv = convert_measurement(d, cfg_.noise);
    int best = -1;
    double best_f = -1.0;
    for (std::size_t i = 0; i < hyps_.size(); ++i) {
        const auto& h = hyps_[i];
        if (!h.alive || exclude.count(h.id)) continue;
        const Vec2 predicted = h.imm ? imm_predicted_position(*h.imm, cfg_.noise, cfg_.imm)
                                     : pf_predicted_position(*h.pf, cfg_.noise);
        const double dist = (predicted - Vec2(conv.z(0), conv.z(1))).norm();
        const double f = similarity(dist, cfg_.association);
        if (f > best_f) {
            best_f = f;
            best = int(i);
        }
    }
    if (best < 0 || best_f < cfg_.spawn_threshold) return -1;
    return best;
}

int Pipeline::spawn(const Detection& d) {
    if (d.is_miss) throw std::invalid_argument("spawn: cannot start a hypothesis from a miss");
    TrackHypothesis h;
    h.id = next_id_++;
    const auto conv = convert_measurement(d, cfg_.noise);
    KinematicState anchor;
    anchor.x = conv.z(0);
    anchor.y = conv.z(1);
    anchor.cov.topLeftCorner<2, 2>() = conv.R.topLeftCorner<2, 2>();
    anchor.t = d.t;
    h.last_anchor = anchor;
    if (cfg_.tracker == ClassifierConfig::Tracker::Imm) {
        h.imm = imm_init(d, cfg_.noise);
    } else {
        h.pf_rng = RandomStream(cfg_.pf_seed + std::uint64_t(h.id) * 0x9e3779b97f4a7c15ull);
        h.pf = pf_init(d, cfg_.noise, cfg_.pf_particles, h.pf_rng);
    }
    for (const auto& [name, tables] : tables_)
        h.charts.emplace(name, init_chart(tables, anchor, chart_options()));
    hyps_.push_back(std::move(h));
    return int(hyps_.size()) - 1;
}

std::map<std::string, double> Pipeline::feedback_prior(const TrackHypothesis& h) const {
    const auto& support = direction_terminals();
    if (cfg_.feedback_mix_patterns && !h.trace.rows.empty()) {
        // Posterior-weighted mixture of every live pattern's prediction.
        std::map<std::string, double> mixed;
        for (const auto& t : support) mixed[t] = 0.0;
        const auto& posterior = h.trace.rows.back().posterior;
        double total = 0.0;
        for (const auto& [name, chart] : h.charts) {
            auto it = posterior.find(name);
            const double w = it == posterior.end() ? 0.0 : it->second;
            if (w <= 0.0) continue;
            auto dist = next_terminal_distribution(chart, chart.frontier(), support);
            for (const auto& t : support) mixed[t] += w * dist[t];
            total += w;
        }
        if (total > 0.0) {
            for (auto& [_, v] : mixed) v /= total;
            return mixed;
        }
    }
    // Single best pattern (lexicographic first before any row exists).
    std::string best = cfg_.patterns.front();
    if (!h.trace.rows.empty()) {
        const std::string label = h.trace.rows.back().map_label;
        if (label != "unclassified") best = label;
    } else {
        best = h.charts.begin()->first;
    }
    const auto& chart = h.charts.at(best);
    return next_terminal_distribution(chart, chart.frontier(), support);
}

void Pipeline::step(TrackHypothesis& h, const Detection& d) {
    if (!h.alive) throw std::logic_error("step: hypothesis is no longer alive");

    std::optional<std::map<std::string, double>> prior;
    if (cfg_.feedback && !d.is_miss) prior = feedback_prior(h);

    TraceRow row;
    row.detection_t = d.t;
    row.miss = d.is_miss;

    std::map<std::string, double> mode_probs;
    KinematicState combined;
    if (h.imm) {
        const auto res = imm_step(*h.imm, d, cfg_.noise, cfg_.imm, prior ? &*prior : nullptr);
        combined = res.combined;
        mode_probs = res.mode_probs;
    } else {
        auto res = pf_step(*h.pf, d, cfg_.noise, cfg_.pf, h.pf_rng);
        combined = res.combined;
        mode_probs = res.mode_probs;
        row.n_eff = res.n_eff;
        if (prior) mode_probs = feedback_mix(mode_probs, *prior, cfg_.feedback_weight);
    }
    h.last_anchor = combined;
    row.state = combined;
    row.mode_probs = mode_probs;
    row.covariance_trace = combined.cov(0, 0) + combined.cov(1, 1);

    SoftTerminal input;
    input.scan_index = h.local_scan;
    input.kinematic = combined;
    input.kinematic.t = h.local_scan;
    if (d.is_miss)
        input.dist[cfg_.nd_symbol] = 1.0;
    else
        input.dist = mode_probs;

    const bool warmed = h.local_scan >= cfg_.chart_warmup;
    for (auto& [name, chart] : h.charts) {
        if (warmed) {
            input.scan_index = chart.frontier();
            if (!chart.dead()) advance(chart, input);
        }
        row.log_prefix[name] =
            chart.dead() ? kLogZero : log_prefix_probability(chart, chart.frontier());
    }
    ++h.local_scan;
    row.scan = h.local_scan;
    row.posterior = normalize_log(row.log_prefix);
    row.map_label = argmax_label(row.log_prefix);
    if (row.map_label == "unclassified") {
        h.unparseable = true;
        h.alive = false;
    }
    h.trace.rows.push_back(std::move(row));
}

void Pipeline::process_scan(int t, const std::vector<Detection>& detections) {
    std::set<int> updated;
    for (const auto& d : detections) {
        if (d.t != t) throw std::invalid_argument("process_scan: detection scan mismatch");
        if (d.is_miss) continue;  // a scan tick; unassigned hypotheses coast below
        const int idx = associate(d, updated);
        if (idx < 0) {
            updated.insert(hyps_[spawn(d)].id);
        } else {
            step(hyps_[idx], d);
            updated.insert(hyps_[idx].id);
        }
    }
    for (auto& h : hyps_) {
        if (!h.alive || updated.count(h.id)) continue;
        Detection miss;
        miss.t = t;
        miss.is_miss = true;
        step(h, miss);
    }
}

void Pipeline::process(const std::vector<Detection>& stream) {
    std::size_t i = 0;
    while (i < stream.size()) {
        const int t = stream[i].t;
        std::vector<Detection> group;
        while (i < stream.size() && stream[i].t == t) group.push_back(stream[i++]);
        process_scan(t, group);
    }
}

HardParseResult classify_hard_modes(const std::vector<std::string>& modes,
                                    const std::map<std::string, Grammar>& patterns) {
    if (modes.empty()) throw std::invalid_argument("classify_hard_modes: empty mode string");
    HardParseResult out;
    ChartOptions opts;
    opts.similarity.anchor = SimilarityConfig::Anchor::Off;
    for (const auto& [name, g] : patterns)
        out.charts.emplace(name, init_chart(make_parser_tables(g), KinematicState{}, opts));

    for (std::size_t k = 0; k < modes.size(); ++k) {
        TraceRow row;
        row.scan = int(k) + 1;
        row.detection_t = int(k);
        for (auto& [name, chart] : out.charts) {
            if (!chart.dead()) {
                scan(chart, SoftTerminal::hard(modes[k], int(k)));
                if (!chart.dead()) {
                    complete(chart, chart.frontier(), opts.similarity, opts.prune_offset);
                    if (k + 1 < modes.size())
                        predict(chart, chart.frontier(), opts.prune_offset);
                }
            }
            row.log_prefix[name] =
                chart.dead() ? kLogZero : log_prefix_probability(chart, chart.frontier());
        }
        row.posterior = normalize_log(row.log_prefix);
        row.map_label = argmax_label(row.log_prefix);
        out.trace.rows.push_back(std::move(row));
    }
    out.map_label = classify_map(out.trace);
    return out;
}

std::string trace_to_csv(const std::vector<TrackHypothesis>& hyps) {
    std::ostringstream os;
    os.precision(17);
    os << "hypothesis,scan,detection_t,miss,pattern,log_prob,posterior,map_label\n";
    for (const auto& h : hyps)
        for (const auto& row : h.trace.rows)
            for (const auto& [name, lp] : row.log_prefix)
                os << h.id << ',' << row.scan << ',' << row.detection_t << ',' << (row.miss ? 1 : 0)
                   << ',' << name << ',' << lp << ',' << row.posterior.at(name) << ','
                   << row.map_label << "\n";
    return os.str();
}

std::string track_output_jsonl(const std::vector<TrackHypothesis>& hyps) {
    std::ostringstream os;
    for (const auto& h : hyps)
        for (const auto& row : h.trace.rows) {
            nlohmann::json j;
            j["hypothesis"] = h.id;
            j["scan"] = row.scan;
            j["t"] = row.detection_t;
            j["miss"] = row.miss;
            j["state"] = {row.state.x, row.state.y, row.state.vx, row.state.vy};
            auto& cov = j["cov"] = nlohmann::json::array();
            for (int r = 0; r < 4; ++r)
                for (int c = 0; c < 4; ++c) cov.push_back(row.state.cov(r, c));
            auto& mp = j["mode_probs"] = nlohmann::json::array();
            for (const auto& dir : direction_terminals()) {
                auto it = row.mode_probs.find(dir);
                mp.push_back(it == row.mode_probs.end() ? 0.0 : it->second);
            }
            if (row.n_eff > 0.0) j["n_eff"] = row.n_eff;
            j["covariance_trace"] = row.covariance_trace;
            j["map_label"] = row.map_label;
            os << j.dump() << "\n";
        }
    return os.str();
}

}  // namespace syntrack
