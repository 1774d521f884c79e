#include "commands.hpp"

#include "coat/annotator.hpp"
#include "coat/bench.hpp"
#include "coat/core.hpp"
#include "coat/errors.hpp"
#include "coat/graph/io.hpp"
#include "coat/graph/score.hpp"
#include "coat/llm.hpp"
#include "coat/loop.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "toml.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace coat::tools {

namespace {

#ifndef COAT_DATA_DIR
#define COAT_DATA_DIR "data"
#endif

std::string fixed(double v, int digits = 2) {
    std::ostringstream o;
    o << std::fixed << std::setprecision(digits) << v;
    return o.str();
}

std::string join(const std::vector<std::string>& v, const char* sep = ", ") {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? sep : "") + v[i];
    return s;
}

void print_edges(const graph::Pag& g, std::ostream& out) {
    if (g.edges().empty()) out << "  (no edges)\n";
    for (const auto& e : g.edges()) {
        const char left = e.mark_at_a == graph::Mark::Arrow ? '<' : graph::mark_glyph(e.mark_at_a);
        out << "  " << g.name(e.a) << " " << left << "-" << graph::mark_glyph(e.mark_at_b) << " " << g.name(e.b) << "\n";
    }
}

/// Output directories must be fresh so stale files never mix with a new run.
void prepare_out_dir(const fs::path& dir, bool overwrite) {
    if (fs::exists(dir) && !fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        if (!overwrite) throw ConfigError("output directory " + dir.string() + " is not empty (use --overwrite)");
        for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
    }
    fs::create_directories(dir);
}

// ---------------------------------------------------------------- run

struct RunFlags {
    std::string config;
    std::optional<std::string> provider, scenario, out, dataset, truth, annotator, cache_dir, algo;
    std::optional<std::uint64_t> seed;
    std::optional<int> max_rounds, jobs;
    bool overwrite = false;
};

fs::path resolve(const json& section, const char* key, const fs::path& base) {
    const fs::path p = section.at(key).get<std::string>();
    return p.is_absolute() ? p : base / p;
}

std::string str_or(const json& section, const char* key, const std::string& fallback) {
    return section.contains(key) ? section.at(key).get<std::string>() : fallback;
}

// typos in a config should fail loudly rather than fall back to defaults
void check_keys(const json& cfg) {
    static const std::map<std::string, std::set<std::string>> known{
        {"", {"seed", "out", "jobs", "data", "loop", "proposer", "annotator"}},
        {"data", {"generator", "n", "seed", "n_text", "n_tab", "graph", "dataset", "truth"}},
        {"loop", {"max_rounds", "alpha", "group_size", "cluster_count_rule", "seed", "cd_algorithm", "initial_subset_size",
                  "cmi_floor", "max_cond_size", "cluster_all_factors", "redundancy_threshold", "annotation_jobs"}},
        {"proposer", {"provider", "scenario", "cache_dir", "base_url", "model", "max_attempts"}},
        {"annotator", {"backend", "commands", "fallback"}},
    };
    for (const auto& [key, value] : cfg.items()) {
        if (!known.at("").contains(key)) throw ConfigError("unknown config key \"" + key + "\"");
        if (!known.contains(key)) continue;
        if (!value.is_object()) throw ConfigError("[" + key + "] must be a table");
        for (const auto& [k, v] : value.items())
            if (!known.at(key).contains(k)) throw ConfigError("unknown config key \"" + key + "." + k + "\"");
    }
    if (cfg.contains("annotator") && cfg["annotator"].contains("commands") && !cfg["annotator"]["commands"].is_object())
        throw ConfigError("[annotator.commands] must be a table of factor = command");
}

int cmd_run(const RunFlags& flags, std::ostream& out) {
    json cfg = flags.config.empty() ? json::object() : load_toml(flags.config);
    check_keys(cfg);
    const fs::path base = flags.config.empty() ? fs::current_path() : fs::absolute(flags.config).parent_path();
    for (const char* t : {"data", "loop", "proposer", "annotator"})
        if (!cfg.contains(t)) cfg[t] = json::object();
    const auto abs = [](const std::string& p) { return fs::absolute(p).string(); };
    if (flags.seed) cfg["seed"] = *flags.seed;
    if (flags.max_rounds) cfg["loop"]["max_rounds"] = *flags.max_rounds;
    if (flags.algo) cfg["loop"]["cd_algorithm"] = *flags.algo;
    if (flags.jobs) cfg["jobs"] = *flags.jobs;
    if (flags.provider) cfg["proposer"]["provider"] = *flags.provider;
    if (flags.scenario) cfg["proposer"]["scenario"] = abs(*flags.scenario);
    if (flags.cache_dir) cfg["proposer"]["cache_dir"] = abs(*flags.cache_dir);
    if (flags.dataset) cfg["data"]["dataset"] = abs(*flags.dataset);
    if (flags.truth) cfg["data"]["truth"] = abs(*flags.truth);
    if (flags.annotator) cfg["annotator"]["backend"] = *flags.annotator;
    if (flags.out) cfg["out"] = abs(*flags.out);

    json& data = cfg["data"];
    json& prop = cfg["proposer"];
    json& ann = cfg["annotator"];
    loop::LoopConfig lc;
    int jobs = 1;
    try {
        json loop_json = cfg["loop"];
        if (cfg.contains("seed")) loop_json["seed"] = cfg["seed"];
        if (cfg.contains("jobs")) {
            jobs = cfg["jobs"].get<int>();
            if (jobs < 1) throw ConfigError("jobs must be >= 1");
            loop_json["annotation_jobs"] = jobs;
        }
        lc = loop::LoopConfig::from_json(loop_json);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }

    // everything that can be checked before touching data or the network
    const std::string provider = str_or(prop, "provider", "scripted");
    const std::string backend = str_or(ann, "backend", "oracle");
    std::shared_ptr<llm::Provider> provider_impl;
    if (provider == "scripted") {
        if (!prop.contains("scenario")) throw ConfigError("the scripted provider needs a scenario file");
        try {
            provider_impl = std::make_shared<llm::ScriptedProvider>(llm::ScriptedProvider::from_file(resolve(prop, "scenario", base)));
        } catch (const ParseError& e) {
            throw ConfigError(std::string("bad scenario: ") + e.what());
        }
    } else if (provider == "http") {
        auto hc = llm::HttpProviderConfig::from_env();
        if (prop.contains("base_url")) hc.base_url = prop["base_url"].get<std::string>();
        if (prop.contains("model")) hc.model = prop["model"].get<std::string>();
        if (prop.contains("max_attempts")) hc.max_attempts = prop["max_attempts"].get<int>();
        provider_impl = std::make_shared<llm::HttpProvider>(hc);
    } else {
        throw ConfigError("unknown provider \"" + provider + "\" (expected scripted or http)");
    }
    auto cache = prop.contains("cache_dir") ? std::make_shared<llm::ResponseCache>(resolve(prop, "cache_dir", base))
                                            : std::make_shared<llm::ResponseCache>();
    auto client = std::make_shared<llm::Client>(provider_impl, cache, std::max(1, jobs));
    if (!cfg.contains("out")) throw ConfigError("no output directory (set out in the config or pass --out)");
    const fs::path run_dir = resolve(cfg, "out", base);

    std::optional<Dataset> dataset;
    std::optional<bench::GroundTruth> truth;
    const std::string generator = str_or(data, "generator", "");
    const auto data_seed = data.value("seed", cfg.value("seed", std::uint64_t{0}));
    if (generator == "apple") {
        auto d = bench::gen_apple(data.value("n", 200), data_seed);
        dataset.emplace(std::move(d.dataset));
        truth = std::move(d.truth);
    } else if (generator == "neuropathic") {
        const fs::path graph_file = data.contains("graph") ? resolve(data, "graph", base) : fs::path(COAT_DATA_DIR) / "neuropathic_graph.json";
        auto d = bench::gen_neuropathic(data.value("n_text", 100), data.value("n_tab", 1000), data_seed, graph_file);
        dataset.emplace(std::move(d.dataset));
        truth = std::move(d.truth);
    } else if (!generator.empty()) {
        throw ConfigError("unknown generator \"" + generator + "\" (expected apple or neuropathic)");
    } else {
        if (!data.contains("dataset")) throw ConfigError("no dataset (set data.dataset or data.generator)");
        dataset.emplace(load_dataset(resolve(data, "dataset", base)));
        if (data.contains("truth")) truth = bench::load_ground_truth(resolve(data, "truth", base));
    }

    std::unique_ptr<annotator::Backend> annot;
    if (backend == "oracle") {
        if (!truth) throw ConfigError("the oracle annotator needs ground truth (data.truth or a generator)");
        annot = std::make_unique<annotator::OracleBackend>(truth->latent_values);
    } else if (backend == "llm") {
        annot = std::make_unique<annotator::LlmBackend>(client);
    } else if (backend == "external") {
        std::map<std::string, std::string> commands;
        if (ann.contains("commands"))
            for (const auto& [k, v] : ann["commands"].items()) commands[normalize_factor_name(k)] = v.get<std::string>();
        annot = std::make_unique<annotator::ExternalBackend>(commands, str_or(ann, "fallback", ""));
    } else {
        throw ConfigError("unknown annotator \"" + backend + "\" (expected oracle, llm or external)");
    }

    prepare_out_dir(run_dir, flags.overwrite);
    json provenance = cfg;
    provenance.erase("out");
    provenance["loop"] = lc.to_json();
    write_file(run_dir / "run_config.json", provenance.dump(2) + "\n");

    loop::RunOptions opts;
    opts.run_dir = run_dir;
    const auto result = loop::run_coat(*dataset, *client, *annot, lc, opts);

    out << "rounds: " << result.records.size() << " (" << result.stop_reason << ")\n";
    out << "final MB estimate: " << (result.mb_estimate.empty() ? "(empty)" : join(result.mb_estimate)) << "\n";
    out << "graph:\n";
    print_edges(result.final_graph, out);
    out << "run directory: " << run_dir.string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- gen

struct GenFlags {
    std::string out = ".";
    std::uint64_t seed = 0;
    int n = 200;
    int n_text = 100;
    int n_tab = 1000;
    std::string graph = std::string(COAT_DATA_DIR) + "/neuropathic_graph.json";
};

int cmd_gen_apple(const GenFlags& f, std::ostream& out) {
    if (f.n < 1) throw ConfigError("-n must be >= 1");
    const auto d = bench::gen_apple(f.n, f.seed);
    fs::create_directories(f.out);
    save_dataset(d.dataset, fs::path(f.out) / "dataset.jsonl");
    bench::save_ground_truth(d.truth, fs::path(f.out) / "truth.json");
    out << "wrote " << d.dataset.size() << " samples to " << (fs::path(f.out) / "dataset.jsonl").string() << "\n";
    return kExitOk;
}

int cmd_gen_neuro(const GenFlags& f, std::ostream& out) {
    if (f.n_text < 1 || f.n_tab < 1) throw ConfigError("--n-text and --n-tab must be >= 1");
    const auto d = bench::gen_neuropathic(f.n_text, f.n_tab, f.seed, f.graph);
    fs::create_directories(f.out);
    save_dataset(d.dataset, fs::path(f.out) / "notes.jsonl");
    save_factor_table_csv(d.tabular, fs::path(f.out) / "tabular.csv");
    bench::save_ground_truth(d.truth, fs::path(f.out) / "truth.json");
    out << "wrote " << d.dataset.size() << " notes and " << d.tabular.rows() << " table rows to " << f.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------- discover

struct DiscoverFlags {
    std::string csv, target, algo = "fci", out = ".";
    double alpha = 0.05;
    int max_cond_size = 4;
};

/// Reorders a CSV so it reads as a factor table: sample_id first, target last.
FactorTable read_table_for(const std::string& path, const std::string& target) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    if (rows.empty()) throw ParseError("CSV is empty");
    auto& header = rows.front();
    const auto t = std::find(header.begin(), header.end(), target);
    if (t == header.end()) throw ParseError("CSV has no column \"" + target + "\"");
    const auto ti = static_cast<std::size_t>(t - header.begin());
    const bool has_id = header.front() == "sample_id";
    std::ostringstream csv;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size())
            throw ParseError("row " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " fields, expected " +
                             std::to_string(header.size()));
        std::vector<std::string> outrow;
        outrow.push_back(has_id ? row[0] : (r == 0 ? std::string("sample_id") : "row-" + std::to_string(r)));
        for (std::size_t j = has_id ? 1 : 0; j < row.size(); ++j)
            if (j != ti) outrow.push_back(row[j]);
        outrow.push_back(row[ti]);
        csv << join(outrow, ",") << "\n";
    }
    return parse_factor_table_csv(csv.str());
}

int cmd_discover(const DiscoverFlags& f, std::ostream& out) {
    loop::LoopConfig lc;
    lc.alpha = f.alpha;
    lc.max_cond_size = f.max_cond_size;
    lc.cd_algorithm = loop::cd_algorithm_from_string(f.algo);
    lc.validate();
    const auto table = read_table_for(f.csv, f.target);
    const auto names = table.factor_order();
    const auto g = loop::discover(table, names, lc);
    fs::create_directories(f.out);
    write_file(fs::path(f.out) / "graph.json", graph::pag_to_json(g).dump(2) + "\n");
    write_file(fs::path(f.out) / "graph.dot", graph::pag_to_dot(g, table.target_name()));
    out << g.size() << " nodes, " << g.edge_count() << " edges\n";
    for (int v = 0; v < static_cast<int>(g.size()); ++v) {
        std::vector<std::string> adj;
        for (int u : g.adjacents(v)) adj.push_back(g.name(u));
        out << "  " << g.name(v) << ": " << (adj.empty() ? "-" : join(adj)) << "\n";
    }
    print_edges(g, out);
    return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalFlags {
    std::vector<std::string> runs;
    std::string truth, mapping, out;
    bool oriented = false;
};

struct TheoryFlags {
    double p = 0.6, c = 0.2, eps = 0.05, delta = 0.1;
    int trials = 10000;
    std::optional<int> t;
    std::uint64_t seed = 1;
};

json score_json(const bench::FactorScore& s) {
    return {{"mb", s.mb_count}, {"nmb", s.nmb_count}, {"ot", s.ot_count},
            {"recall", s.recall}, {"precision", s.precision}, {"f1", s.f1}};
}

std::vector<loop::RoundRecord> load_records(const fs::path& run) {
    std::vector<std::pair<int, fs::path>> dirs;
    const fs::path rounds = run / "rounds";
    if (!fs::is_directory(rounds)) throw ConfigError(run.string() + " is not a run directory (no rounds/)");
    for (const auto& e : fs::directory_iterator(rounds))
        if (e.is_directory()) dirs.emplace_back(std::stoi(e.path().filename().string()), e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<loop::RoundRecord> out;
    for (const auto& [_, d] : dirs) out.push_back(loop::RoundRecord::from_json(json::parse(read_file(d / "record.json"))));
    return out;
}

/// Found graph renamed onto truth variables; unmatched truth variables stay isolated.
graph::Pag mapped_graph(const graph::Pag& found, const bench::GroundTruth& truth,
                        const std::map<std::string, std::string>& match) {
    graph::Pag g(truth.dag.nodes());
    std::vector<std::optional<int>> to(found.size());
    std::set<int> used;
    for (int v = 0; v < static_cast<int>(found.size()); ++v) {
        std::string name = found.name(v);
        if (name != truth.target) {
            const auto it = match.find(name);
            if (it == match.end() || it->second == bench::kOther) continue;
            name = it->second;
        }
        const int t = truth.dag.require(name);
        if (used.insert(t).second) to[static_cast<std::size_t>(v)] = t;
    }
    for (const auto& e : found.edges()) {
        const auto a = to[static_cast<std::size_t>(e.a)], b = to[static_cast<std::size_t>(e.b)];
        if (a && b) g.set_edge(*a, *b, e.mark_at_a, e.mark_at_b);
    }
    return g;
}

int cmd_eval(const EvalFlags& f, std::ostream& out) {
    if (f.runs.empty() || f.truth.empty() || f.mapping.empty())
        throw ConfigError("eval needs --run, --truth and --mapping (or the theory subcommand)");
    const auto truth = bench::load_ground_truth(f.truth);
    std::map<std::string, std::string> match;
    // inline object or a file holding one
    const bool inline_map = f.mapping.find_first_not_of(" \t") != std::string::npos &&
                            f.mapping[f.mapping.find_first_not_of(" \t")] == '{';
    if (!inline_map && !fs::is_regular_file(f.mapping)) throw ConfigError("mapping file not found: " + f.mapping);
    try {
        const auto j = json::parse(inline_map ? f.mapping : read_file(f.mapping));
        if (!j.is_object()) throw ConfigError("mapping must be a JSON object of name pairs");
        for (const auto& [k, v] : j.items()) match[normalize_factor_name(k)] = v.get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("mapping must be a JSON object of name pairs: ") + e.what());
    }

    json report{{"runs", json::array()}};
    std::vector<bench::FactorScore> scores;
    graph::ScoreOptions so;
    so.orientation_sensitive = f.oriented;
    for (const auto& run : f.runs) {
        const auto records = load_records(run);
        std::vector<std::string> found;
        for (const auto& r : records)
            for (const auto& a : r.accepted) found.push_back(a.name);
        for (const auto& name : found)
            if (!match.contains(name)) throw ConfigError("factor \"" + name + "\" in " + run + " has no mapping entry");
        bench::FactorScore fs_score;
        bench::AncestorScore anc;
        try {
            fs_score = bench::score_factors(found, truth, match);
            anc = bench::score_ancestors(found, truth, match);
        } catch (const InvariantError& e) {
            throw ConfigError(e.what());
        }
        const auto ability = bench::ability_scores(records);
        const auto final_graph = graph::pag_from_json(json::parse(read_file(fs::path(run) / "final" / "graph.json")));
        const auto gs = graph::score_graph(mapped_graph(final_graph, truth, match), truth.dag, so);
        scores.push_back(fs_score);

        json gj{{"shd", gs.shd}, {"edge_recall", gs.edge_recall}, {"edge_precision", gs.edge_precision}, {"edge_f1", gs.edge_f1}};
        gj["sid"] = gs.sid ? json(*gs.sid) : json(nullptr);
        gj["sid_upper"] = gs.sid_upper ? json(*gs.sid_upper) : json(nullptr);
        json aj{{"pa", anc.pa}, {"an", anc.an}, {"ot", anc.ot}, {"accuracy", anc.accuracy}};
        aj["f1"] = anc.f1 ? json(*anc.f1) : json(nullptr);
        json ab{{"perception", ability.perception}, {"cmi", ability.cmi}, {"capacity_undefined", ability.capacity_undefined}};
        ab["capacity"] = ability.capacity_undefined ? json(nullptr) : json(ability.capacity);
        report["runs"].push_back({{"run", fs::path(run).filename().string()},
                                  {"factors", found},
                                  {"factor_score", score_json(fs_score)},
                                  {"ancestor_score", aj},
                                  {"graph_score", gj},
                                  {"ability", ab}});

        out << "run " << fs::path(run).filename().string() << "\n";
        out << "  factors: MB " << fixed(fs_score.mb_count) << "  NMB " << fixed(fs_score.nmb_count) << "  OT "
            << fixed(fs_score.ot_count) << "  recall " << fixed(fs_score.recall) << "  precision " << fixed(fs_score.precision)
            << "  f1 " << fixed(fs_score.f1) << "\n";
        out << "  ancestors: PA " << anc.pa << "  AN " << anc.an << "  OT " << anc.ot << "  accuracy " << fixed(anc.accuracy)
            << "  f1 " << anc.f1_text() << "\n";
        out << "  graph: SHD " << gs.shd << "  SID " << (gs.sid ? std::to_string(*gs.sid) : "n/a") << "  edge f1 "
            << fixed(gs.edge_f1) << "\n";
        out << "  ability: perception " << fixed(ability.perception) << "  capacity "
            << (ability.capacity_undefined ? std::string("undefined") : fixed(ability.capacity)) << "\n";
    }
    const auto avg = bench::average_scores(scores);
    report["aggregate"] = {{"runs", scores.size()}, {"factor_score", score_json(avg)}};
    out << "\n| MB | NMB | OT | Recall | Precision | F1 |\n|---|---|---|---|---|---|\n";
    out << "| " << fixed(avg.mb_count) << " | " << fixed(avg.nmb_count) << " | " << fixed(avg.ot_count) << " | "
        << fixed(avg.recall) << " | " << fixed(avg.precision) << " | " << fixed(avg.f1) << " |\n";
    if (!f.out.empty()) write_file(f.out, report.dump(2) + "\n");
    return kExitOk;
}

int cmd_theory(const TheoryFlags& f, std::ostream& out) {
    bench::TheoryParams p;
    p.p = f.p;
    p.c_psi = f.c;
    p.epsilon = f.eps;
    p.delta = f.delta;
    try {
        p.validate();
    } catch (const InvariantError& e) {
        throw ConfigError(e.what());
    }
    if (f.trials < 1) throw ConfigError("--trials must be >= 1");
    p.t = f.t ? *f.t : bench::bound_round(p);
    const auto r = bench::simulate_theory(p, f.trials, f.seed);
    out << "bound_round: " << r.bound_round << "\n";
    out << "rounds simulated: " << p.t << "\n";
    out << "success rate: " << fixed(r.success_rate, 4) << " (target >= " << fixed(1 - p.delta, 2) << ")\n";
    out << "log-ratio " << fixed(1 - p.delta, 2) << "-quantile: " << fixed(r.log_ratio_quantile, 4) << "\n";
    out << "rate bound: " << fixed(r.rate_bound, 4) << "\n";
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"COAT: causal factor discovery from unstructured data with an LLM in the loop", "coat"};
    app.require_subcommand(1);

    RunFlags rf;
    auto* run = app.add_subcommand("run", "run the propose/annotate/discover loop");
    run->add_option("--config", rf.config, "TOML run configuration")->check(CLI::ExistingFile);
    run->add_option("--provider", rf.provider, "scripted or http");
    run->add_option("--scenario", rf.scenario, "scripted provider scenario (JSON)");
    run->add_option("--seed", rf.seed, "master seed");
    run->add_option("--max-rounds", rf.max_rounds, "round budget (1 = no feedback)");
    run->add_option("--out", rf.out, "run directory");
    run->add_option("--dataset", rf.dataset, "dataset JSONL");
    run->add_option("--truth", rf.truth, "ground truth JSON (oracle annotator)");
    run->add_option("--annotator", rf.annotator, "oracle, llm or external");
    run->add_option("--algo", rf.algo, "fci or lingam");
    run->add_option("--cache-dir", rf.cache_dir, "persistent LLM response cache");
    run->add_option("--jobs", rf.jobs, "parallelism cap");
    run->add_flag("--overwrite", rf.overwrite, "clear a non-empty run directory first");

    GenFlags gf;
    auto* gen = app.add_subcommand("gen", "generate benchmark data");
    gen->require_subcommand(1);
    auto* apple = gen->add_subcommand("apple", "AppleGastronome reviews");
    apple->add_option("-n", gf.n, "samples");
    apple->add_option("--seed", gf.seed);
    apple->add_option("--out", gf.out, "output directory");
    auto* neuro = gen->add_subcommand("neuropathic", "clinical notes plus a tabular sample");
    neuro->add_option("--n-text", gf.n_text, "notes");
    neuro->add_option("--n-tab", gf.n_tab, "table rows");
    neuro->add_option("--seed", gf.seed);
    neuro->add_option("--graph", gf.graph, "graph definition")->check(CLI::ExistingFile);
    neuro->add_option("--out", gf.out, "output directory");

    DiscoverFlags df;
    auto* disc = app.add_subcommand("discover", "causal discovery on a factor table");
    disc->add_option("--csv", df.csv, "factor table CSV")->required();
    disc->add_option("--target", df.target, "target column")->required();
    disc->add_option("--algo", df.algo, "fci or lingam");
    disc->add_option("--alpha", df.alpha, "significance level");
    disc->add_option("--max-cond-size", df.max_cond_size);
    disc->add_option("--out", df.out, "output directory");

    EvalFlags ef;
    TheoryFlags tf;
    auto* eval = app.add_subcommand("eval", "score run directories against ground truth");
    eval->require_subcommand(0, 1);
    eval->add_option("--run", ef.runs, "run directory (repeatable)");
    eval->add_option("--truth", ef.truth, "ground truth JSON");
    eval->add_option("--mapping", ef.mapping, "JSON object (inline or a file path): found factor -> truth variable or \"other\"");
    eval->add_option("--out", ef.out, "report.json path");
    eval->add_flag("--oriented", ef.oriented, "count edges only when their marks match");
    auto* theory = eval->add_subcommand("theory", "check the round bound by simulation");
    theory->add_option("--p", tf.p, "perception score");
    theory->add_option("--c", tf.c, "capacity score");
    theory->add_option("--eps", tf.eps, "target ratio");
    theory->add_option("--delta", tf.delta, "failure probability");
    theory->add_option("--trials", tf.trials);
    theory->add_option("--t", tf.t, "rounds (default: the bound)");
    theory->add_option("--seed", tf.seed);

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) return cmd_run(rf, out);
        try {
            if (apple->parsed()) return cmd_gen_apple(gf, out);
            if (neuro->parsed()) return cmd_gen_neuro(gf, out);
        } catch (const InvariantError& e) {
            throw ConfigError(e.what());
        }
        if (disc->parsed()) return cmd_discover(df, out);
        if (theory->parsed()) return cmd_theory(tf, out);
        if (eval->parsed()) return cmd_eval(ef, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ParseError& e) {
        err << "input error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitBackend;
    }
    return kExitConfig;
}

}  // namespace coat::tools
