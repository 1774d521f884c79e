#include "coat/loop.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <set>
#include <iostream>
#include <sstream>

#include "coat/errors.hpp"
#include "coat/graph/fci.hpp"
#include "coat/graph/io.hpp"
#include "coat/graph/lingam.hpp"
#include "coat/rng.hpp"
#include "coat/stats.hpp"

namespace coat::loop {

using graph::Mark;
using graph::Pag;

std::string to_string(CdAlgorithm a) { return a == CdAlgorithm::Fci ? "fci" : "lingam"; }

CdAlgorithm cd_algorithm_from_string(std::string_view s) {
    if (s == "fci") return CdAlgorithm::Fci;
    if (s == "lingam" || s == "direct_lingam") return CdAlgorithm::DirectLingam;
    throw ConfigError("unknown discovery algorithm \"" + std::string(s) + "\" (expected fci or lingam)");
}

void LoopConfig::validate() const {
    if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
    if (!(alpha > 0 && alpha < 1)) throw ConfigError("alpha must lie in (0, 1)");
    if (group_size < 1) throw ConfigError("group_size must be >= 1");
    if (fixed_cluster_count < 0) throw ConfigError("cluster count must be positive");
    if (initial_subset_size < 1) throw ConfigError("initial_subset_size must be >= 1");
    if (max_cond_size < 0) throw ConfigError("max_cond_size must be >= 0");
    if (!(redundancy_threshold > 0 && redundancy_threshold <= 1)) throw ConfigError("redundancy_threshold must lie in (0, 1]");
}

int LoopConfig::cluster_count(std::size_t n_factors) const {
    return fixed_cluster_count > 0 ? fixed_cluster_count : static_cast<int>(n_factors) + 1;
}

nlohmann::json LoopConfig::to_json() const {
    return {{"max_rounds", max_rounds},
            {"alpha", alpha},
            {"group_size", group_size},
            {"cluster_count_rule", fixed_cluster_count > 0 ? nlohmann::json(fixed_cluster_count) : nlohmann::json("factors_plus_one")},
            {"seed", seed},
            {"cd_algorithm", to_string(cd_algorithm)},
            {"initial_subset_size", initial_subset_size},
            {"cmi_floor", cmi_floor},
            {"max_cond_size", max_cond_size},
            {"cluster_all_factors", cluster_all_factors},
            {"redundancy_threshold", redundancy_threshold},
            {"annotation_jobs", annotation_jobs}};
}

LoopConfig LoopConfig::from_json(const nlohmann::json& j) {
    LoopConfig c;
    try {
        c.max_rounds = j.value("max_rounds", c.max_rounds);
        c.alpha = j.value("alpha", c.alpha);
        c.group_size = j.value("group_size", c.group_size);
        if (j.contains("cluster_count_rule")) {
            const auto& r = j.at("cluster_count_rule");
            if (r.is_number_integer()) {
                c.fixed_cluster_count = r.get<int>();
            } else if (r.get<std::string>() != "factors_plus_one") {
                throw ConfigError("cluster_count_rule must be \"factors_plus_one\" or an integer");
            }
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("cd_algorithm")) c.cd_algorithm = cd_algorithm_from_string(j.at("cd_algorithm").get<std::string>());
        c.initial_subset_size = j.value("initial_subset_size", c.initial_subset_size);
        c.cmi_floor = j.value("cmi_floor", c.cmi_floor);
        c.max_cond_size = j.value("max_cond_size", c.max_cond_size);
        c.cluster_all_factors = j.value("cluster_all_factors", c.cluster_all_factors);
        c.redundancy_threshold = j.value("redundancy_threshold", c.redundancy_threshold);
        c.annotation_jobs = j.value("annotation_jobs", c.annotation_jobs);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad loop config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {
nlohmann::json specs_json(const std::vector<FactorSpec>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& s : v) a.push_back(factor_spec_to_json(s));
    return a;
}
std::vector<FactorSpec> specs_from(const nlohmann::json& a) {
    std::vector<FactorSpec> out;
    for (const auto& s : a) out.push_back(factor_spec_from_json(s));
    return out;
}
std::vector<std::string> names_of(const std::vector<FactorSpec>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.name);
    return out;
}
}  // namespace

nlohmann::json RoundRecord::to_json() const {
    nlohmann::json rej = nlohmann::json::array();
    for (const auto& [n, r] : rejected) rej.push_back({{"factor", n}, {"reason", r}});
    return {{"round", round},
            {"proposed", specs_json(proposed)},
            {"accepted", specs_json(accepted)},
            {"replayed", replayed},
            {"rejected", rej},
            {"parse_rejections", parse_rejections},
            {"graph", graph::pag_to_json(graph)},
            {"mb_estimate", mb_estimate},
            {"cmi", cmi},
            {"cmi_before", cmi_before},
            {"feedback_subset", feedback_subset},
            {"perception_inputs", {{"n_proposed", n_proposed}, {"n_valid", n_valid}}}};
}

RoundRecord RoundRecord::from_json(const nlohmann::json& j) {
    RoundRecord r;
    try {
        r.round = j.at("round").get<int>();
        r.proposed = specs_from(j.at("proposed"));
        r.accepted = specs_from(j.at("accepted"));
        r.replayed = j.value("replayed", std::vector<std::string>{});
        for (const auto& e : j.value("rejected", nlohmann::json::array()))
            r.rejected.emplace_back(e.at("factor").get<std::string>(), e.at("reason").get<std::string>());
        r.parse_rejections = j.value("parse_rejections", std::vector<std::string>{});
        r.graph = graph::pag_from_json(j.at("graph"));
        r.mb_estimate = j.at("mb_estimate").get<std::vector<std::string>>();
        r.cmi = j.at("cmi").get<double>();
        r.cmi_before = j.value("cmi_before", 0.0);
        r.feedback_subset = j.value("feedback_subset", std::vector<std::string>{});
        r.n_proposed = j.at("perception_inputs").at("n_proposed").get<int>();
        r.n_valid = j.at("perception_inputs").at("n_valid").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed round record: ") + e.what());
    }
    return r;
}

std::vector<std::string> extract_mb(const Pag& g, std::string_view target) {
    const auto y_opt = g.index_of(target);
    if (!y_opt) throw InvariantError("target \"" + std::string(target) + "\" is not a graph node");
    const int y = *y_opt;
    std::set<int> mb;
    for (int v : g.adjacents(y)) mb.insert(v);
    auto may_be_arrow = [](Mark m) { return m == Mark::Arrow || m == Mark::Circle; };
    for (int c : g.adjacents(y)) {
        for (int w : g.adjacents(c)) {
            if (w == y || g.adjacent(w, y)) continue;
            const Mark at_c_from_y = g.mark(y, c), at_c_from_w = g.mark(w, c);
            if (!may_be_arrow(at_c_from_y) || !may_be_arrow(at_c_from_w)) continue;
            // two circles at c mean FCI already ruled out a collider there
            if (at_c_from_y != Mark::Arrow && at_c_from_w != Mark::Arrow) continue;
            mb.insert(w);
        }
    }
    std::vector<std::string> out;
    for (int v = 0; v < static_cast<int>(g.size()); ++v)
        if (mb.contains(v)) out.push_back(g.name(v));
    return out;
}

std::vector<std::size_t> initial_subset(std::size_t n, int size, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(std::min(n, static_cast<std::size_t>(std::max(1, size))));
    std::sort(idx.begin(), idx.end());
    return idx;
}

Feedback build_feedback(const Dataset& dataset, const FactorTable& table, std::span<const std::string> mb_estimate,
                        const LoopConfig& config, std::uint64_t seed) {
    if (table.rows() == 0) throw InvariantError("build_feedback: empty table");
    Feedback fb;
    std::vector<std::string> cols;
    if (config.cluster_all_factors) {
        cols = table.factor_order();
    } else {
        for (const auto& m : mb_estimate)
            if (table.has(m)) cols.push_back(m);
    }
    if (cols.empty()) {
        for (std::size_t i : initial_subset(table.rows(), config.initial_subset_size, seed))
            fb.subset.push_back(table.sample_ids()[i]);
        fb.text = "No factor explains " + table.target_name() + " yet; the samples below are a random selection.";
        return fb;
    }
    std::vector<std::vector<double>> points(table.rows(), std::vector<double>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        const auto& col = table.column(cols[j]);
        for (std::size_t i = 0; i < table.rows(); ++i) points[i][j] = col[i];
    }
    const auto clustering = stats::kmeans(points, config.cluster_count(table.factor_count()), seed);
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(clustering.k));
    for (std::size_t i = 0; i < table.rows(); ++i)
        members[static_cast<std::size_t>(clustering.assignments[i])].push_back(i);

    int best = -1;
    double best_h = -1;
    for (int c = 0; c < clustering.k; ++c) {
        const auto& m = members[static_cast<std::size_t>(c)];
        if (m.empty()) continue;
        const double h = stats::conditional_entropy(table, m, cols).value;
        const bool better = best < 0 || h > best_h + 1e-12 ||
                            (std::abs(h - best_h) <= 1e-12 && m.size() > members[static_cast<std::size_t>(best)].size());
        if (better) {
            best = c;
            best_h = h;
        }
    }
    fb.cluster = best;
    fb.entropy = best_h;
    for (std::size_t i : members[static_cast<std::size_t>(best)]) fb.subset.push_back(table.sample_ids()[i]);

    std::ostringstream text;
    text << "The factors found so far are:\n";
    for (const auto& f : table.factors()) text << "- " << f.name << ": " << f.description << "\n";
    text << "The samples shown below are ones whose " << dataset.target_name()
         << " these factors cannot explain well. Look for new factors, different from the ones above, that account for "
            "the differences in "
         << dataset.target_name() << " among them.\n";
    fb.text = text.str();
    return fb;
}

Pag discover(const FactorTable& table, std::span<const std::string> names, const LoopConfig& config) {
    std::vector<std::string> nodes(names.begin(), names.end());
    nodes.push_back(table.target_name());
    if (names.empty()) return Pag(nodes);
    const Eigen::MatrixXd data = table.numeric_with_target(names);
    if (config.cd_algorithm == CdAlgorithm::Fci) {
        graph::FciOptions opt;
        opt.alpha = config.alpha;
        opt.max_cond_size = config.max_cond_size;
        auto hits = std::make_shared<std::size_t>(0);
        auto g = graph::fci(graph::fisher_z_ci(data, config.alpha, hits), nodes, opt);
        if (*hits > 0)
            std::clog << "[discover] " << *hits
                      << " CI test(s) hit a deterministic relation among the factors and were treated as dependence\n";
        return g;
    }
    const auto dag = graph::direct_lingam(data, nodes);
    Pag g(nodes);
    for (const auto& [p, c] : dag.edges()) g.set_edge(p, c, Mark::Tail, Mark::Arrow);
    return g;
}

namespace {

std::string fmt(double v) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(4) << v;
    return o.str();
}

void write_round(const std::filesystem::path& dir, const std::string& prompt, const std::string& reply,
                 const RoundRecord& rec, const FactorTable& table) {
    write_file(dir / "prompt.txt", prompt);
    write_file(dir / "reply.txt", reply);
    write_file(dir / "factors.json", serialize_factor_specs(rec.proposed));
    write_file(dir / "table.csv", serialize_factor_table_csv(table));
    write_file(dir / "graph.json", graph::pag_to_json(rec.graph).dump(2) + "\n");
    write_file(dir / "graph.dot", graph::pag_to_dot(rec.graph, table.target_name()));
    write_file(dir / "record.json", rec.to_json().dump(2) + "\n");
}

}  // namespace

LoopResult run_coat(const Dataset& dataset, llm::Client& proposer_client, annotator::Backend& annotator,
                    const LoopConfig& config, const RunOptions& options) {
    config.validate();
    LoopResult result;
    result.final_graph = Pag(std::vector<std::string>{dataset.target_name()});
    FactorTable annotated = FactorTable::empty_for(dataset);
    const auto& target = dataset.target_name();
    std::vector<std::string> mb;
    double cmi_prev = stats::cmi_proxy(annotated, {}).value;
    auto subset = initial_subset(dataset.size(), config.initial_subset_size, Rng::derive(config.seed, 1));
    std::optional<std::string> feedback;

    if (options.run_dir) {
        nlohmann::json cfg{{"loop", config.to_json()},
                           {"dataset", {{"samples", dataset.size()}, {"target", target}, {"target_domain", dataset.target_domain()}}},
                           {"proposer", proposer_client.provider().name()},
                           {"annotator", annotator::to_string(annotator.kind())}};
        write_file(*options.run_dir / "config.json", cfg.dump(2) + "\n");
    }

    for (int t = 1; t <= config.max_rounds; ++t) {
        RoundRecord rec;
        rec.round = t;
        rec.cmi_before = cmi_prev;
        const auto prompt = proposer::build_prompt(dataset, subset, config.group_size, result.factors, feedback,
                                                   Rng::derive(config.seed, 100 + static_cast<std::uint64_t>(t)));
        llm::ChatRequest req;
        req.system = "You are an expert who identifies the high-level factors behind observations.";
        req.user = prompt.render();
        req.temperature = llm::kProposalTemperature;
        req.max_tokens = 2048;
        req.tag = "propose-round-" + std::to_string(t);
        const auto reply = proposer_client.complete(req);

        auto parsed = proposer::parse_proposals(reply.content, ValueSpace::ternary(), t);
        rec.parse_rejections = parsed.rejections;
        std::vector<FactorSpec> fresh;
        for (auto& f : parsed.factors) {
            if (result.pool.contains(f.name)) {
                rec.rejected.emplace_back(f.name, "already proposed in an earlier round");
                continue;
            }
            fresh.push_back(f);
        }
        rec.proposed = parsed.factors;
        rec.n_proposed = static_cast<int>(parsed.factors.size());

        if (!fresh.empty()) {
            const auto cols = annotator::annotate(dataset, fresh, annotator, config.seed, nullptr, config.annotation_jobs);
            annotated = merge_factor_tables(annotated, cols);
        }
        const auto existing = names_of(result.factors);
        const auto filtered = proposer::filter_factors(fresh, annotated, mb, existing, config.alpha, config.redundancy_threshold);
        rec.n_valid = filtered.n_valid;
        for (const auto& f : filtered.accepted) result.pool.add(f, proposer::PoolStatus::Active, t, "passed filter");
        for (const auto& r : filtered.rejected) {
            const bool redundant = r.reason == proposer::RejectReason::Redundant;
            result.pool.add(r.spec, redundant ? proposer::PoolStatus::FilteredRedundant : proposer::PoolStatus::Replayable, t,
                            r.detail);
            rec.rejected.emplace_back(r.spec.name, (redundant ? "redundant: " : "independent: ") + r.detail);
        }
        rec.accepted = filtered.accepted;
        for (const auto& f : proposer::replay_pool(result.pool, annotated, mb, config.alpha, t)) {
            if (std::find(existing.begin(), existing.end(), f.name) != existing.end()) continue;
            if (std::any_of(rec.accepted.begin(), rec.accepted.end(), [&](const auto& a) { return a.name == f.name; }))
                continue;
            rec.accepted.push_back(f);
            rec.replayed.push_back(f.name);
        }
        result.factors.insert(result.factors.end(), rec.accepted.begin(), rec.accepted.end());

        const auto names = names_of(result.factors);
        const FactorTable current = annotated.select(names);
        rec.graph = discover(current, names, config);
        rec.mb_estimate = extract_mb(rec.graph, target);
        rec.cmi = stats::cmi_proxy(current, rec.mb_estimate).value;
        const auto fb = build_feedback(dataset, current, rec.mb_estimate, config,
                                       Rng::derive(config.seed, 200 + static_cast<std::uint64_t>(t)));
        rec.feedback_subset = fb.subset;

        if (options.run_dir)
            write_round(*options.run_dir / "rounds" / std::to_string(t), prompt.render(), reply.content, rec, current);
        result.records.push_back(rec);
        result.final_graph = rec.graph;
        result.mb_estimate = rec.mb_estimate;

        if (rec.accepted.empty()) {
            result.stop_reason = "round " + std::to_string(t) + " accepted no new factors";
            break;
        }
        if (rec.cmi < config.cmi_floor) {
            result.stop_reason = "cmi fell below the floor in round " + std::to_string(t);
            break;
        }
        mb = rec.mb_estimate;
        cmi_prev = rec.cmi;
        feedback = fb.text;
        subset.clear();
        for (const auto& id : fb.subset) subset.push_back(*dataset.find(id));
    }
    if (result.stop_reason.empty()) result.stop_reason = "reached max_rounds";

    if (options.run_dir) {
        const auto dir = *options.run_dir / "final";
        write_file(dir / "graph.json", graph::pag_to_json(result.final_graph).dump(2) + "\n");
        write_file(dir / "graph.dot", graph::pag_to_dot(result.final_graph, target));
        write_file(dir / "pool.json", result.pool.to_json().dump(2) + "\n");
        write_file(dir / "report.md", render_report(result, dataset, config));
    }
    return result;
}

std::string render_report(const LoopResult& result, const Dataset& dataset, const LoopConfig& config) {
    std::ostringstream out;
    out << "# COAT run\n\n";
    out << "- target: " << dataset.target_name() << " (" << dataset.size() << " samples)\n";
    out << "- discovery: " << to_string(config.cd_algorithm) << ", alpha " << config.alpha << "\n";
    out << "- rounds: " << result.records.size() << " (" << result.stop_reason << ")\n\n";
    out << "| round | proposed | accepted | MB estimate | cmi |\n|---|---|---|---|---|\n";
    for (const auto& r : result.records) {
        auto join = [](const std::vector<std::string>& v) {
            std::string s;
            for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
            return s.empty() ? std::string("-") : s;
        };
        out << "| " << r.round << " | " << join(names_of(r.proposed)) << " | " << join(names_of(r.accepted)) << " | "
            << join(r.mb_estimate) << " | " << fmt(r.cmi) << " |\n";
    }
    out << "\n## Final Markov blanket estimate\n\n";
    if (result.mb_estimate.empty()) out << "(empty)\n";
    for (const auto& m : result.mb_estimate) out << "- " << m << "\n";
    out << "\n## Final graph\n\n";
    const auto& g = result.final_graph;
    if (g.edges().empty()) out << "(no edges)\n";
    for (const auto& e : g.edges()) {
        const char left = e.mark_at_a == Mark::Arrow ? '<' : graph::mark_glyph(e.mark_at_a);
        out << "- " << g.name(e.a) << " " << left << "-" << graph::mark_glyph(e.mark_at_b) << " " << g.name(e.b) << "\n";
    }
    return out.str();
}

}  // namespace coat::loop
