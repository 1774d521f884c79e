#include <algorithm>
#include <cstdio>
#include <set>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat::bench {

namespace {

struct Variable {
    std::string name;
    std::string level;
    std::string label;
    std::optional<double> prior;
    std::optional<double> leak;
    std::vector<std::string> present;
    std::vector<std::string> absent;
};

struct NeuroGraph {
    std::string target;
    double default_leak = 0.05;
    std::vector<Variable> variables;
    std::vector<std::tuple<std::string, std::string, double>> edges;
    graph::Dag dag;
};

NeuroGraph load_graph(const std::filesystem::path& path) {
    NeuroGraph g;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        g.target = j.at("target").get<std::string>();
        g.default_leak = j.value("default_leak", 0.05);
        for (const auto& v : j.at("variables")) {
            Variable var;
            var.name = v.at("name").get<std::string>();
            var.level = v.at("level").get<std::string>();
            var.label = v.value("label", var.name);
            if (v.contains("prior")) var.prior = v.at("prior").get<double>();
            if (v.contains("leak")) var.leak = v.at("leak").get<double>();
            var.present = v.value("present", std::vector<std::string>{});
            var.absent = v.value("absent", std::vector<std::string>{});
            g.variables.push_back(std::move(var));
        }
        for (const auto& e : j.at("edges"))
            g.edges.emplace_back(e.at("from").get<std::string>(), e.at("to").get<std::string>(), e.at("weight").get<double>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed neuropathic graph file " + path.string() + ": " + e.what());
    }
    std::vector<std::string> names;
    for (const auto& v : g.variables) names.push_back(v.name);
    g.dag = graph::Dag(names);
    for (const auto& [from, to, w] : g.edges) {
        if (w < 0 || w > 1) throw ParseError("edge weight outside [0, 1]: " + from + " -> " + to);
        g.dag.add_edge(from, to);
    }
    if (!g.dag.index_of(g.target)) throw ParseError("target \"" + g.target + "\" is not a variable of the graph");
    for (const auto& v : g.variables) {
        if (g.dag.parents(g.dag.require(v.name)).empty() && !v.prior)
            throw ParseError("root variable \"" + v.name + "\" has no prior");
        if (v.level == "symptom" && v.name != g.target && v.present.empty())
            throw ParseError("symptom \"" + v.name + "\" has no note phrasing");
    }
    return g;
}

std::vector<int> sample_row(const NeuroGraph& g, Rng& rng) {
    const auto& dag = g.dag;
    std::vector<int> x(dag.size(), 0);
    for (int v : dag.topological_order()) {
        const auto& var = g.variables[static_cast<std::size_t>(v)];
        double p;
        if (dag.parents(v).empty()) {
            p = *var.prior;
        } else {
            // linear additive activation keeps conditional means linear in the parents
            p = var.leak.value_or(g.default_leak);
            for (const auto& [from, to, w] : g.edges)
                if (to == var.name) p += w * x[static_cast<std::size_t>(dag.require(from))];
            p = std::min(1.0, p);
        }
        x[static_cast<std::size_t>(v)] = rng.bernoulli(p) ? 1 : 0;
    }
    return x;
}

ValueSpace binary_space() {
    ValueSpace vs;
    vs.levels = {0, 1};
    vs.level_meanings = {"absent", "present"};
    return vs;
}

}  // namespace

std::map<std::string, std::string> neuropathic_labels(const std::filesystem::path& graph_file) {
    std::map<std::string, std::string> out;
    for (const auto& v : load_graph(graph_file).variables) out[v.name] = v.label;
    return out;
}

std::map<std::string, std::string> neuropathic_levels(const std::filesystem::path& graph_file) {
    std::map<std::string, std::string> out;
    for (const auto& v : load_graph(graph_file).variables) out[v.name] = v.level;
    return out;
}

NeuroData gen_neuropathic(int n_text, int n_tabular, std::uint64_t seed, const std::filesystem::path& graph_file) {
    if (n_text < 1 || n_tabular < 1) throw InvariantError("gen_neuropathic needs positive sample counts");
    const NeuroGraph g = load_graph(graph_file);
    const auto& dag = g.dag;
    const int y = dag.require(g.target);

    GroundTruth truth;
    truth.dag = dag;
    truth.target = g.target;
    std::set<int> spouses;
    for (int p : dag.parents(y)) truth.parents.push_back(dag.name(p));
    for (int c : dag.children(y)) {
        truth.children.push_back(dag.name(c));
        for (int s : dag.parents(c))
            if (s != y && !dag.adjacent(s, y)) spouses.insert(s);
    }
    for (int s : spouses) truth.spouses.push_back(dag.name(s));
    const ValueSpace vs = binary_space();
    nlohmann::json mech = nlohmann::json::object();
    for (const auto& v : g.variables) {
        if (v.name == g.target) continue;
        FactorSpec f;
        f.name = v.name;
        f.description = v.label + " (" + v.level + " level)";
        f.value_space = vs;
        f.guideline = {"no evidence of " + v.label, v.label + " present"};
        f.origin = FactorOrigin::GroundTruth;
        truth.factors.push_back(f);
    }
    for (const auto& v : g.variables) {
        if (v.prior) {
            mech[v.name] = "Bernoulli(" + std::to_string(*v.prior) + ")";
        } else {
            std::string m = "Bernoulli(min(1, " + std::to_string(v.leak.value_or(g.default_leak));
            for (const auto& [from, to, w] : g.edges)
                if (to == v.name) m += " + " + std::to_string(w) + "*" + from;
            mech[v.name] = m + "))";
        }
    }
    truth.mechanisms = mech;

    std::vector<RawSample> notes;
    for (int i = 0; i < n_text; ++i) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
        const auto x = sample_row(g, rng);
        char id[32];
        std::snprintf(id, sizeof id, "note-%04d", i + 1);
        std::vector<std::string> parts;
        for (std::size_t v = 0; v < g.variables.size(); ++v) {
            const auto& var = g.variables[v];
            if (var.name != g.target) truth.latent_values[var.name][id] = x[v];
            if (var.level != "symptom" || var.name == g.target) continue;
            const auto& bank = x[v] ? var.present : var.absent;
            // absent symptoms are mentioned only some of the time
            if (bank.empty() || (!x[v] && !rng.bernoulli(0.3))) continue;
            parts.push_back(bank[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(bank.size()) - 1))]);
        }
        rng.shuffle(parts);
        std::string text = "Patient presents for review.";
        if (parts.empty()) {
            text += " No specific complaints were recorded.";
        } else {
            text += " Reports ";
            for (std::size_t k = 0; k < parts.size(); ++k) {
                if (k) text += k + 1 == parts.size() ? " and " : ", ";
                text += parts[k];
            }
            text += ".";
        }
        notes.push_back({id, text, x[static_cast<std::size_t>(y)]});
    }
    Dataset ds(std::move(notes), g.target, {0, 1},
               {{"context", "Each sample is a clinical note; the target records whether the patient was diagnosed with "
                            "right shoulder impingement."}});

    std::vector<std::vector<int>> cols(truth.factors.size());
    std::vector<std::string> ids;
    std::vector<int> target;
    for (int i = 0; i < n_tabular; ++i) {
        Rng rng(Rng::derive(seed ^ 0x7ab1e5ULL, static_cast<std::uint64_t>(i)));
        const auto x = sample_row(g, rng);
        char id[32];
        std::snprintf(id, sizeof id, "row-%05d", i + 1);
        ids.push_back(id);
        target.push_back(x[static_cast<std::size_t>(y)]);
        for (std::size_t f = 0; f < truth.factors.size(); ++f)
            cols[f].push_back(x[static_cast<std::size_t>(dag.require(truth.factors[f].name))]);
    }
    FactorTable tab(truth.factors, std::move(cols), std::move(ids), std::move(target), g.target);
    truth.validate();
    return {std::move(ds), std::move(tab), std::move(truth)};
}

}  // namespace coat::bench
