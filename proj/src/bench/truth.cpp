#include <algorithm>
#include <set>

#include "coat/bench.hpp"
#include "coat/errors.hpp"
#include "coat/graph/io.hpp"

namespace coat::bench {

std::vector<std::string> GroundTruth::mb() const {
    std::vector<std::string> out = parents;
    out.insert(out.end(), children.begin(), children.end());
    out.insert(out.end(), spouses.begin(), spouses.end());
    return out;
}

std::vector<std::string> GroundTruth::universe() const {
    std::vector<std::string> out;
    for (const auto& n : dag.nodes())
        if (n != target) out.push_back(n);
    return out;
}

const FactorSpec& GroundTruth::factor(std::string_view name) const {
    const auto key = normalize_factor_name(name);
    for (const auto& f : factors)
        if (normalize_factor_name(f.name) == key) return f;
    throw InvariantError("ground truth has no factor \"" + std::string(name) + "\"");
}

void GroundTruth::validate() const {
    const int y = dag.require(target);
    std::set<std::string> declared;
    for (const auto& v : mb()) declared.insert(v);
    std::set<std::string> actual;
    for (int v : dag.markov_blanket(y)) actual.insert(dag.name(v));
    if (declared != actual) throw InvariantError("declared Markov blanket roles do not match the DAG");
    for (const auto& p : parents)
        if (!dag.has_edge(dag.require(p), y)) throw InvariantError("\"" + p + "\" is not a parent of the target");
    for (const auto& c : children)
        if (!dag.has_edge(y, dag.require(c))) throw InvariantError("\"" + c + "\" is not a child of the target");
    for (const auto& d : disturbing) {
        dag.require(d);
        if (declared.contains(d)) throw InvariantError("disturbing factor \"" + d + "\" lies in the Markov blanket");
    }
    for (const auto& [name, col] : latent_values) {
        const auto& spec = factor(name);
        for (const auto& [id, v] : col)
            if (!spec.value_space.contains(v))
                throw InvariantError("latent value of \"" + name + "\" for " + id + " is outside its value space");
    }
}

nlohmann::json GroundTruth::to_json() const {
    nlohmann::json specs = nlohmann::json::array();
    for (const auto& f : factors) specs.push_back(factor_spec_to_json(f));
    return {{"dag", graph::dag_to_json(dag)}, {"target", target},     {"parents", parents},
            {"children", children},            {"spouses", spouses}, {"disturbing", disturbing},
            {"factors", specs},                {"mechanisms", mechanisms}, {"latent_values", latent_values}};
}

GroundTruth GroundTruth::from_json(const nlohmann::json& j) {
    GroundTruth t;
    try {
        t.dag = graph::dag_from_json(j.at("dag"));
        t.target = j.at("target").get<std::string>();
        t.parents = j.at("parents").get<std::vector<std::string>>();
        t.children = j.at("children").get<std::vector<std::string>>();
        t.spouses = j.at("spouses").get<std::vector<std::string>>();
        t.disturbing = j.value("disturbing", std::vector<std::string>{});
        if (j.contains("factors"))
            for (const auto& f : j.at("factors")) t.factors.push_back(factor_spec_from_json(f));
        t.mechanisms = j.value("mechanisms", nlohmann::json::object());
        if (j.contains("latent_values"))
            t.latent_values = j.at("latent_values").get<std::map<std::string, std::map<std::string, int>>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed ground-truth file: ") + e.what());
    }
    t.validate();
    return t;
}

void save_ground_truth(const GroundTruth& t, const std::filesystem::path& path) {
    write_file(path, t.to_json().dump(2) + "\n");
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    try {
        return GroundTruth::from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("ground-truth file " + path.string() + ": " + e.what());
    }
}

FactorTable truth_table(const Dataset& dataset, const GroundTruth& truth, std::span<const std::string> names) {
    std::vector<std::string> wanted(names.begin(), names.end());
    if (wanted.empty())
        for (const auto& f : truth.factors)
            if (truth.latent_values.contains(f.name)) wanted.push_back(f.name);
    std::vector<FactorSpec> specs;
    std::vector<std::vector<int>> cols;
    for (const auto& name : wanted) {
        const auto& spec = truth.factor(name);
        const auto it = truth.latent_values.find(spec.name);
        if (it == truth.latent_values.end()) throw InvariantError("no latent values for \"" + name + "\"");
        std::vector<int> col;
        for (const auto& s : dataset.samples()) {
            const auto v = it->second.find(s.id);
            if (v == it->second.end()) throw InvariantError("no latent value of \"" + name + "\" for sample " + s.id);
            col.push_back(v->second);
        }
        specs.push_back(spec);
        cols.push_back(std::move(col));
    }
    return FactorTable(std::move(specs), std::move(cols), dataset.ids(), dataset.targets(), dataset.target_name());
}

}  // namespace coat::bench
