#include "coat/core.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coat/errors.hpp"

namespace coat {

using nlohmann::json;

// ---------------------------------------------------------------- Dataset

Dataset::Dataset(std::vector<RawSample> samples, std::string target_name, std::vector<int> target_domain,
                 std::map<std::string, std::string> metadata)
    : samples_(std::move(samples)),
      target_name_(std::move(target_name)),
      target_domain_(std::move(target_domain)),
      metadata_(std::move(metadata)) {
    if (samples_.empty()) throw InvariantError("dataset is empty");
    std::sort(target_domain_.begin(), target_domain_.end());
    target_domain_.erase(std::unique(target_domain_.begin(), target_domain_.end()), target_domain_.end());
    std::set<std::string_view> seen;
    for (const auto& s : samples_) {
        if (!seen.insert(s.id).second) throw InvariantError("duplicate id \"" + s.id + "\"");
        if (!std::binary_search(target_domain_.begin(), target_domain_.end(), s.target))
            throw InvariantError("target " + std::to_string(s.target) + " of sample \"" + s.id +
                                 "\" is outside the target domain");
    }
}

std::vector<std::string> Dataset::ids() const {
    std::vector<std::string> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.id);
    return out;
}

std::vector<int> Dataset::targets() const {
    std::vector<int> out;
    out.reserve(samples_.size());
    for (const auto& s : samples_) out.push_back(s.target);
    return out;
}

std::optional<std::size_t> Dataset::find(std::string_view id) const {
    for (std::size_t i = 0; i < samples_.size(); ++i)
        if (samples_[i].id == id) return i;
    return std::nullopt;
}

// ---------------------------------------------------------------- ValueSpace / FactorSpec

ValueSpace ValueSpace::range(int lo, int hi) {
    ValueSpace vs;
    vs.levels.clear();
    vs.level_meanings.clear();
    for (int v = lo; v <= hi; ++v) {
        vs.levels.push_back(v);
        vs.level_meanings.push_back("level " + std::to_string(v));
    }
    return vs;
}

void ValueSpace::validate() const {
    if (levels.size() < 2) throw InvariantError("value space needs at least 2 levels");
    for (std::size_t i = 1; i < levels.size(); ++i)
        if (levels[i] <= levels[i - 1]) throw InvariantError("value space levels must be strictly increasing");
    if (level_meanings.size() != levels.size())
        throw InvariantError("value space needs one meaning per level");
}

bool ValueSpace::contains(int v) const { return std::binary_search(levels.begin(), levels.end(), v); }

int ValueSpace::neutral() const {
    if (contains(0)) return 0;
    return levels[(levels.size() - 1) / 2];
}

std::string ValueSpace::describe() const {
    std::string out;
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(levels[i]);
    }
    return out;
}

std::string to_string(FactorOrigin o) {
    switch (o) {
        case FactorOrigin::LlmRound: return "llm-round";
        case FactorOrigin::Scripted: return "scripted";
        case FactorOrigin::GroundTruth: return "ground-truth";
    }
    return "scripted";
}

FactorOrigin factor_origin_from_string(std::string_view s) {
    if (s == "llm-round" || s.starts_with("llm-round-")) return FactorOrigin::LlmRound;
    if (s == "ground-truth") return FactorOrigin::GroundTruth;
    if (s == "scripted") return FactorOrigin::Scripted;
    throw ParseError("unknown factor origin \"" + std::string(s) + "\"");
}

void FactorSpec::validate() const {
    if (normalize_factor_name(name).empty()) throw InvariantError("factor name is empty");
    value_space.validate();
    if (guideline.size() != value_space.levels.size())
        throw InvariantError("guideline of factor \"" + name + "\" does not cover every level");
    for (const auto& g : guideline)
        if (g.empty()) throw InvariantError("guideline of factor \"" + name + "\" has an empty level rule");
}

std::string FactorSpec::guideline_text() const {
    std::string out;
    for (std::size_t i = 0; i < guideline.size() && i < value_space.levels.size(); ++i) {
        out += std::to_string(value_space.levels[i]) + ": " + guideline[i] + "\n";
    }
    return out;
}

std::string normalize_factor_name(std::string_view name) {
    std::size_t b = 0, e = name.size();
    while (b < e && std::isspace(static_cast<unsigned char>(name[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(name[e - 1]))) --e;
    std::string out;
    bool in_space = false;
    for (std::size_t i = b; i < e; ++i) {
        const auto c = static_cast<unsigned char>(name[i]);
        if (std::isspace(c)) {
            in_space = true;
            continue;
        }
        if (in_space) out += '_';
        in_space = false;
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

// ---------------------------------------------------------------- FactorTable

FactorTable::FactorTable(std::vector<FactorSpec> factors, std::vector<std::vector<int>> columns,
                         std::vector<std::string> sample_ids, std::vector<int> target, std::string target_name)
    : factors_(std::move(factors)),
      columns_(std::move(columns)),
      sample_ids_(std::move(sample_ids)),
      target_(std::move(target)),
      target_name_(std::move(target_name)) {
    if (factors_.size() != columns_.size()) throw InvariantError("factor count does not match column count");
    if (target_.size() != sample_ids_.size()) throw InvariantError("target column length does not match sample count");
    std::set<std::string> names;
    for (std::size_t j = 0; j < factors_.size(); ++j) {
        const auto& f = factors_[j];
        f.value_space.validate();
        const auto key = normalize_factor_name(f.name);
        if (key.empty()) throw InvariantError("factor name is empty");
        if (!names.insert(key).second) throw InvariantError("duplicate factor name \"" + f.name + "\"");
        if (columns_[j].size() != sample_ids_.size())
            throw InvariantError("column \"" + f.name + "\" length does not match sample count");
        for (std::size_t r = 0; r < columns_[j].size(); ++r)
            if (!f.value_space.contains(columns_[j][r]))
                throw InvariantError("cell (" + sample_ids_[r] + ", " + f.name + ") = " +
                                     std::to_string(columns_[j][r]) + " is outside the value space");
    }
}

FactorTable FactorTable::empty_for(const Dataset& dataset) {
    return FactorTable({}, {}, dataset.ids(), dataset.targets(), dataset.target_name());
}

std::vector<std::string> FactorTable::factor_order() const {
    std::vector<std::string> out;
    out.reserve(factors_.size());
    for (const auto& f : factors_) out.push_back(f.name);
    return out;
}

std::optional<std::size_t> FactorTable::index_of(std::string_view name) const {
    const auto key = normalize_factor_name(name);
    for (std::size_t j = 0; j < factors_.size(); ++j)
        if (normalize_factor_name(factors_[j].name) == key) return j;
    return std::nullopt;
}

const std::vector<int>& FactorTable::column(std::string_view name) const {
    const auto j = index_of(name);
    if (!j) throw InvariantError("no factor column \"" + std::string(name) + "\"");
    return columns_[*j];
}

FactorTable FactorTable::select(std::span<const std::string> names) const {
    std::vector<FactorSpec> fs;
    std::vector<std::vector<int>> cols;
    for (const auto& n : names) {
        const auto j = index_of(n);
        if (!j) throw InvariantError("no factor column \"" + n + "\"");
        fs.push_back(factors_[*j]);
        cols.push_back(columns_[*j]);
    }
    return FactorTable(std::move(fs), std::move(cols), sample_ids_, target_, target_name_);
}

Eigen::MatrixXd FactorTable::numeric_with_target(std::span<const std::string> names) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(names.size() + 1));
    for (std::size_t j = 0; j < names.size(); ++j) {
        const auto& col = column(names[j]);
        for (std::size_t r = 0; r < rows(); ++r) m(r, j) = col[r];
    }
    for (std::size_t r = 0; r < rows(); ++r) m(r, names.size()) = target_[r];
    return m;
}

Eigen::MatrixXd FactorTable::numeric_with_target() const {
    const auto names = factor_order();
    return numeric_with_target(names);
}

FactorTable merge_factor_tables(const FactorTable& a, const FactorTable& b) {
    if (a.sample_ids() != b.sample_ids()) throw InvariantError("cannot merge tables: sample ids are misaligned");
    if (a.target() != b.target()) throw InvariantError("cannot merge tables: target columns differ");
    for (const auto& f : b.factors())
        if (a.has(f.name)) throw InvariantError("cannot merge tables: factor name collision on \"" + f.name + "\"");
    auto factors = a.factors();
    std::vector<std::vector<int>> cols;
    for (std::size_t j = 0; j < a.factor_count(); ++j) cols.push_back(a.column(j));
    for (std::size_t j = 0; j < b.factor_count(); ++j) {
        factors.push_back(b.factors()[j]);
        cols.push_back(b.column(j));
    }
    return FactorTable(std::move(factors), std::move(cols), a.sample_ids(), a.target(), a.target_name());
}

// ---------------------------------------------------------------- file helpers

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

// ---------------------------------------------------------------- Dataset JSONL

namespace {

int parse_integer_target(const json& v, std::size_t line) {
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<long long>(d))) return static_cast<int>(d);
        throw ParseError("continuous target " + v.dump() + " is not supported; targets must be integers", line);
    }
    throw ParseError("field \"y\" must be an integer", line);
}

}  // namespace

Dataset parse_dataset(std::string_view jsonl) {
    std::vector<RawSample> samples;
    std::string target_name = "y";
    std::optional<std::vector<int>> declared;
    std::map<std::string, std::string> meta;
    std::set<std::string> ids;

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        if (nl == std::string_view::npos) nl = jsonl.size();
        std::string_view line = jsonl.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            if (nl == jsonl.size()) break;
            continue;
        }
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(std::string("malformed record: ") + e.what(), line_no);
        }
        if (!rec.is_object()) throw ParseError("malformed record: expected an object", line_no);
        if (rec.contains("_meta")) {
            if (!samples.empty()) throw ParseError("_meta record must come first", line_no);
            const auto& m = rec["_meta"];
            if (!m.is_object()) throw ParseError("malformed _meta record", line_no);
            for (auto it = m.begin(); it != m.end(); ++it) {
                if (it.key() == "target_name") {
                    target_name = it.value().get<std::string>();
                } else if (it.key() == "target_domain") {
                    std::vector<int> dom;
                    for (const auto& v : it.value()) dom.push_back(parse_integer_target(v, line_no));
                    declared = dom;
                } else {
                    meta[it.key()] = it.value().is_string() ? it.value().get<std::string>() : it.value().dump();
                }
            }
            continue;
        }
        if (!rec.contains("id") || !rec["id"].is_string()) throw ParseError("malformed record: missing string \"id\"", line_no);
        if (!rec.contains("text") || !rec["text"].is_string())
            throw ParseError("malformed record: missing string \"text\"", line_no);
        if (!rec.contains("y")) throw ParseError("malformed record: missing \"y\"", line_no);
        RawSample s{rec["id"].get<std::string>(), rec["text"].get<std::string>(), parse_integer_target(rec["y"], line_no)};
        if (!ids.insert(s.id).second) throw ParseError("duplicate id \"" + s.id + "\"", line_no);
        samples.push_back(std::move(s));
        if (nl == jsonl.size()) break;
    }
    if (samples.empty()) throw ParseError("dataset file is empty");

    std::vector<int> domain;
    if (declared) {
        domain = *declared;
    } else {
        std::set<int> seen;
        for (const auto& s : samples) seen.insert(s.target);
        domain.assign(seen.begin(), seen.end());
    }
    return Dataset(std::move(samples), std::move(target_name), std::move(domain), std::move(meta));
}

Dataset load_dataset(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error("dataset file not found: " + path.string());
    return parse_dataset(read_file(path));
}

std::string serialize_dataset(const Dataset& d) {
    std::string out;
    json meta = json::object();
    meta["target_name"] = d.target_name();
    meta["target_domain"] = d.target_domain();
    for (const auto& [k, v] : d.metadata()) meta[k] = v;
    out += json{{"_meta", meta}}.dump() + "\n";
    for (const auto& s : d.samples()) {
        json rec = {{"id", s.id}, {"text", s.text}, {"y", s.target}};
        out += rec.dump() + "\n";
    }
    return out;
}

void save_dataset(const Dataset& d, const std::filesystem::path& path) { write_file(path, serialize_dataset(d)); }

// ---------------------------------------------------------------- FactorTable CSV

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

int parse_cell(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw ParseError("non-integer cell \"" + s + "\"", line);
        return v;
    } catch (const std::logic_error&) {
        throw ParseError("non-integer cell \"" + s + "\"", line);
    }
}

}  // namespace

std::string serialize_factor_table_csv(const FactorTable& t) {
    std::string out = "sample_id";
    for (const auto& f : t.factors()) out += "," + csv_field(f.name);
    out += "," + csv_field(t.target_name()) + "\n";
    for (std::size_t r = 0; r < t.rows(); ++r) {
        out += csv_field(t.sample_ids()[r]);
        for (std::size_t j = 0; j < t.factor_count(); ++j) out += "," + std::to_string(t.cell(r, j));
        out += "," + std::to_string(t.target()[r]) + "\n";
    }
    return out;
}

FactorTable parse_factor_table_csv(std::string_view csv, std::span<const FactorSpec> specs) {
    std::vector<std::vector<std::string>> lines;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        auto nl = csv.find('\n', pos);
        if (nl == std::string_view::npos) nl = csv.size();
        std::string_view line = csv.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty()) lines.push_back(split_csv_line(line));
        pos = nl + 1;
    }
    if (lines.empty()) throw ParseError("factor table CSV is empty");
    const auto& header = lines.front();
    if (header.size() < 2 || header.front() != "sample_id")
        throw ParseError("factor table header must start with sample_id and end with the target column", 1);
    const std::size_t k = header.size() - 2;

    std::vector<std::string> ids;
    std::vector<int> target;
    std::vector<std::vector<int>> cols(k);
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& row = lines[i];
        if (row.size() != header.size())
            throw ParseError("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(row.size()),
                             i + 1);
        ids.push_back(row[0]);
        for (std::size_t j = 0; j < k; ++j) cols[j].push_back(parse_cell(row[j + 1], i + 1));
        target.push_back(parse_cell(row.back(), i + 1));
    }

    std::vector<FactorSpec> factors;
    for (std::size_t j = 0; j < k; ++j) {
        const auto& name = header[j + 1];
        const FactorSpec* given = nullptr;
        for (const auto& s : specs)
            if (normalize_factor_name(s.name) == normalize_factor_name(name)) given = &s;
        if (given) {
            factors.push_back(*given);
            continue;
        }
        std::set<int> levels{-1, 0, 1};
        levels.insert(cols[j].begin(), cols[j].end());
        FactorSpec f;
        f.name = name;
        f.description = name;
        f.value_space.levels.assign(levels.begin(), levels.end());
        f.value_space.level_meanings.clear();
        for (int v : f.value_space.levels) {
            f.value_space.level_meanings.push_back("level " + std::to_string(v));
            f.guideline.push_back("value " + std::to_string(v));
        }
        factors.push_back(std::move(f));
    }
    return FactorTable(std::move(factors), std::move(cols), std::move(ids), std::move(target), header.back());
}

void save_factor_table_csv(const FactorTable& t, const std::filesystem::path& path) {
    write_file(path, serialize_factor_table_csv(t));
}

FactorTable load_factor_table_csv(const std::filesystem::path& path, std::span<const FactorSpec> specs) {
    return parse_factor_table_csv(read_file(path), specs);
}

// ---------------------------------------------------------------- FactorSpec JSON

json factor_spec_to_json(const FactorSpec& f) {
    return {{"name", f.name},
            {"description", f.description},
            {"guideline", f.guideline},
            {"levels", f.value_space.levels},
            {"level_meanings", f.value_space.level_meanings},
            {"origin", to_string(f.origin)},
            {"round", f.round}};
}

FactorSpec factor_spec_from_json(const json& o) {
    FactorSpec f;
    try {
        f.name = o.at("name").get<std::string>();
        f.description = o.value("description", "");
        if (o.contains("levels")) f.value_space.levels = o.at("levels").get<std::vector<int>>();
        if (o.contains("level_meanings")) {
            f.value_space.level_meanings = o.at("level_meanings").get<std::vector<std::string>>();
        } else if (o.contains("levels")) {
            f.value_space.level_meanings.clear();
            for (int v : f.value_space.levels) f.value_space.level_meanings.push_back("level " + std::to_string(v));
        }
        const auto& g = o.at("guideline");
        if (g.is_array()) {
            f.guideline = g.get<std::vector<std::string>>();
        } else {
            // a single string applies to every level
            f.guideline.assign(f.value_space.levels.size(), g.get<std::string>());
        }
        if (o.contains("origin")) f.origin = factor_origin_from_string(o.at("origin").get<std::string>());
        f.round = o.value("round", 0);
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed factor spec: ") + e.what());
    }
    f.validate();
    return f;
}

std::string serialize_factor_specs(std::span<const FactorSpec> specs) {
    json arr = json::array();
    for (const auto& f : specs) arr.push_back(factor_spec_to_json(f));
    return arr.dump(2) + "\n";
}

std::vector<FactorSpec> parse_factor_specs(std::string_view text) {
    json arr;
    try {
        arr = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("malformed factor spec file: ") + e.what());
    }
    if (!arr.is_array()) throw ParseError("factor spec file must hold a JSON array");
    std::vector<FactorSpec> out;
    std::set<std::string> names;
    for (const auto& o : arr) {
        FactorSpec f = factor_spec_from_json(o);
        if (!names.insert(normalize_factor_name(f.name)).second)
            throw InvariantError("duplicate factor name \"" + f.name + "\"");
        out.push_back(std::move(f));
    }
    return out;
}

void save_factor_specs(std::span<const FactorSpec> specs, const std::filesystem::path& path) {
    write_file(path, serialize_factor_specs(specs));
}

std::vector<FactorSpec> load_factor_specs(const std::filesystem::path& path) {
    return parse_factor_specs(read_file(path));
}

}  // namespace coat
