#include "coat/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "coat/errors.hpp"
#include "coat/rng.hpp"

namespace coat::proposer {

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string upper(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

std::vector<std::string> lines_of(std::string_view text) {
    std::vector<std::string> out;
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        out.push_back(line);
    }
    return out;
}

std::string join(std::span<const std::string> v, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

}  // namespace

std::string ProposalPrompt::render() const {
    std::string out = instructions_section + "\n";
    if (feedback_section) out += *feedback_section + "\n";
    out += samples_section + "\n" + format_section;
    return out;
}

ProposalPrompt build_prompt(const Dataset& dataset, std::span<const std::size_t> subset, int group_size,
                            std::span<const FactorSpec> known_factors, const std::optional<std::string>& feedback,
                            std::uint64_t seed) {
    if (subset.empty()) throw InvariantError("build_prompt: empty sample subset");
    if (group_size < 1) throw InvariantError("build_prompt: group_size must be >= 1");
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i : subset) groups[dataset.sample(i).target].push_back(i);

    ProposalPrompt p;
    std::ostringstream samples;
    samples << "## Samples\n";
    for (auto& [y, members] : groups) {
        Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(y + 1000)));
        rng.shuffle(members);
        members.resize(std::min(members.size(), static_cast<std::size_t>(group_size)));
        std::sort(members.begin(), members.end());
        samples << "\n### Group: " << dataset.target_name() << " = " << y << "\n";
        int k = 1;
        for (std::size_t i : members) {
            samples << "Sample " << k++ << ": " << dataset.sample(i).text << "\n";
            p.shown_ids.push_back(dataset.sample(i).id);
        }
    }
    p.samples_section = samples.str();

    std::ostringstream ins;
    ins << "## Instructions\n";
    const auto ctx = dataset.metadata().find("context");
    if (ctx != dataset.metadata().end() && !ctx->second.empty()) ins << ctx->second << "\n\n";
    ins << "The samples below are grouped by the value of " << dataset.target_name() << ". "
        << "Propose high-level factors that help explain why " << dataset.target_name()
        << " differs between the groups. Each factor must be something that can be read off a single sample. "
        << "For every factor give a short name, a one-line description, and a concrete guideline stating how to "
           "decide each of its values from a sample.\n";
    if (!known_factors.empty()) {
        ins << "\nFactors already identified (do not propose them again):\n";
        for (const auto& f : known_factors) ins << "- " << f.name << ": " << f.description << "\n";
    }
    ins << "\nIf you cannot find any new factor, say so and output no factor block.\n";
    p.instructions_section = ins.str();

    std::ostringstream fmt;
    fmt << "## Format\nWrite each factor as its own fenced block, exactly like this:\n\n"
        << "```factor\nFACTOR: <name>\nDESCRIPTION: <one line>\nGUIDELINE:\n"
        << "-1: <when the sample indicates the negative side>\n0: <when the sample does not mention it>\n"
        << "1: <when the sample indicates the positive side>\n```\n"
        << "A factor with a wider integer scale may add a line such as \"LEVELS: -2..2\" and give one rule per level.\n";
    p.format_section = fmt.str();

    if (feedback && !feedback->empty()) p.feedback_section = "## Feedback\n" + *feedback;
    return p;
}

std::string format_factor_block(const FactorSpec& spec) {
    std::string out = "```factor\nFACTOR: " + spec.name + "\nDESCRIPTION: " + spec.description + "\n";
    if (spec.value_space.levels != ValueSpace::ternary().levels)
        out += "LEVELS: " + std::to_string(spec.value_space.levels.front()) + ".." +
               std::to_string(spec.value_space.levels.back()) + "\n";
    out += "GUIDELINE:\n";
    out += spec.guideline_text();
    out += "```\n";
    return out;
}

ParseResult parse_proposals(std::string_view reply, const ValueSpace& value_space, int round) {
    ParseResult result;
    const auto lines = lines_of(reply);
    std::set<std::string> seen;
    std::size_t i = 0;
    int block_no = 0;
    while (i < lines.size()) {
        if (!trim(lines[i]).starts_with("```")) {
            ++i;
            continue;
        }
        std::vector<std::string> body;
        std::size_t j = i + 1;
        while (j < lines.size() && !trim(lines[j]).starts_with("```")) body.push_back(lines[j++]);
        i = j + 1;
        ++block_no;

        std::optional<std::string> name, description, levels;
        bool in_guideline = false, has_guideline = false;
        std::map<int, std::string> rules;
        std::vector<std::string> bad_lines;
        for (const auto& raw : body) {
            const std::string line = trim(raw);
            if (line.empty()) continue;
            const auto colon = line.find(':');
            const std::string key = colon == std::string::npos ? "" : upper(trim(line.substr(0, colon)));
            const std::string value = colon == std::string::npos ? "" : trim(line.substr(colon + 1));
            if (key == "FACTOR" || key == "NAME") {
                name = value;
                in_guideline = false;
            } else if (key == "DESCRIPTION") {
                description = value;
                in_guideline = false;
            } else if (key == "LEVELS") {
                levels = value;
                in_guideline = false;
            } else if (key == "GUIDELINE") {
                in_guideline = has_guideline = true;
            } else if (in_guideline && colon != std::string::npos) {
                try {
                    std::size_t used = 0;
                    const std::string lvl = trim(line.substr(0, colon));
                    const int level = std::stoi(lvl, &used);
                    if (used != lvl.size()) throw std::invalid_argument(lvl);
                    rules[level] = value;
                } catch (const std::exception&) {
                    bad_lines.push_back(line);
                }
            }
        }
        if (!name && !description && !has_guideline) continue;  // an unrelated code block

        const std::string label = "block " + std::to_string(block_no) + (name ? " (" + *name + ")" : "");
        auto reject = [&](const std::string& why) {
            result.rejections.push_back(label + ": " + why);
            std::clog << "[proposer] dropped " << label << ": " << why << "\n";
        };
        if (!name || normalize_factor_name(*name).empty()) {
            reject("missing FACTOR name");
            continue;
        }
        if (!description || description->empty()) {
            reject("missing DESCRIPTION");
            continue;
        }
        if (!has_guideline || rules.empty()) {
            reject("missing GUIDELINE");
            continue;
        }
        ValueSpace space = value_space;
        if (levels) {
            const auto dots = levels->find("..");
            try {
                if (dots == std::string::npos) throw std::invalid_argument(*levels);
                const int lo = std::stoi(levels->substr(0, dots)), hi = std::stoi(levels->substr(dots + 2));
                if (hi <= lo) throw std::invalid_argument(*levels);
                space = ValueSpace::range(lo, hi);
            } catch (const std::exception&) {
                reject("LEVELS must look like lo..hi");
                continue;
            }
        }
        FactorSpec spec;
        spec.name = normalize_factor_name(*name);
        spec.description = *description;
        spec.value_space = space;
        spec.origin = FactorOrigin::LlmRound;
        spec.round = round;
        std::string missing;
        for (int level : space.levels) {
            const auto it = rules.find(level);
            if (it == rules.end() || it->second.empty()) {
                missing += (missing.empty() ? "" : ", ") + std::to_string(level);
                continue;
            }
            spec.guideline.push_back(it->second);
        }
        if (!missing.empty()) {
            reject("guideline lacks level(s) " + missing);
            continue;
        }
        for (const auto& [level, _] : rules)
            if (!space.contains(level)) missing += (missing.empty() ? "" : ", ") + std::to_string(level);
        if (!missing.empty()) {
            reject("guideline uses level(s) outside the value space: " + missing);
            continue;
        }
        if (!seen.insert(spec.name).second) {
            reject("duplicate factor name");
            continue;
        }
        result.factors.push_back(std::move(spec));
    }
    return result;
}

std::string to_string(PoolStatus s) {
    switch (s) {
        case PoolStatus::Active: return "active";
        case PoolStatus::FilteredRedundant: return "filtered-redundant";
        case PoolStatus::FilteredIndependent: return "filtered-independent";
        case PoolStatus::Replayable: return "replayable";
    }
    return "active";
}

PoolStatus pool_status_from_string(std::string_view s) {
    if (s == "active") return PoolStatus::Active;
    if (s == "filtered-redundant") return PoolStatus::FilteredRedundant;
    if (s == "filtered-independent") return PoolStatus::FilteredIndependent;
    if (s == "replayable") return PoolStatus::Replayable;
    throw ParseError("unknown pool status \"" + std::string(s) + "\"");
}

void FactorPool::add(const FactorSpec& spec, PoolStatus status, int round, const std::string& reason) {
    if (contains(spec.name)) throw InvariantError("factor \"" + spec.name + "\" is already in the pool");
    entries_.push_back({spec, status, {{status, round, reason}}});
}

void FactorPool::set_status(std::string_view name, PoolStatus status, int round, const std::string& reason) {
    const auto key = normalize_factor_name(name);
    for (auto& e : entries_)
        if (normalize_factor_name(e.spec.name) == key) {
            e.status = status;
            e.history.push_back({status, round, reason});
            return;
        }
    throw InvariantError("factor \"" + std::string(name) + "\" is not in the pool");
}

const PoolEntry* FactorPool::find(std::string_view name) const {
    const auto key = normalize_factor_name(name);
    for (const auto& e : entries_)
        if (normalize_factor_name(e.spec.name) == key) return &e;
    return nullptr;
}

std::vector<FactorSpec> FactorPool::with_status(PoolStatus s) const {
    std::vector<FactorSpec> out;
    for (const auto& e : entries_)
        if (e.status == s) out.push_back(e.spec);
    return out;
}

nlohmann::json FactorPool::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : entries_) {
        nlohmann::json hist = nlohmann::json::array();
        for (const auto& h : e.history)
            hist.push_back({{"status", to_string(h.status)}, {"round", h.round}, {"reason", h.reason}});
        arr.push_back({{"spec", factor_spec_to_json(e.spec)}, {"status", to_string(e.status)}, {"history", hist}});
    }
    return arr;
}

FactorPool FactorPool::from_json(const nlohmann::json& j) {
    FactorPool pool;
    try {
        for (const auto& o : j) {
            PoolEntry e;
            e.spec = factor_spec_from_json(o.at("spec"));
            e.status = pool_status_from_string(o.at("status").get<std::string>());
            for (const auto& h : o.at("history"))
                e.history.push_back({pool_status_from_string(h.at("status").get<std::string>()), h.at("round").get<int>(),
                                     h.at("reason").get<std::string>()});
            if (pool.contains(e.spec.name)) throw InvariantError("duplicate pool entry \"" + e.spec.name + "\"");
            pool.entries_.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed factor pool: ") + e.what());
    }
    return pool;
}

stats::CiResult dependence_test(const FactorTable& table, std::string_view name, std::span<const std::string> given,
                                double alpha) {
    if (!table.has(name)) throw InvariantError("no annotated column for factor \"" + std::string(name) + "\"");
    std::vector<std::string> cols;
    for (const auto& g : given) {
        if (!table.has(g)) throw InvariantError("no annotated column for factor \"" + g + "\"");
        if (normalize_factor_name(g) != normalize_factor_name(name)) cols.push_back(g);
    }
    cols.emplace_back(name);
    const Eigen::MatrixXd data = table.numeric_with_target(cols);
    const int x = static_cast<int>(cols.size()) - 1;
    const int y = static_cast<int>(cols.size());
    std::vector<int> s(cols.size() - 1);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = static_cast<int>(k);
    try {
        return stats::fisher_z_test(data, x, y, s, alpha);
    } catch (const DeterministicRelationError&) {
        std::clog << "[proposer] \"" << name << "\" is a deterministic function of its conditioning set; treating it as dependent\n";
        stats::CiResult r;
        r.alpha = alpha;
        r.conditioning_size = static_cast<int>(s.size());
        r.p_value = 0.0;
        r.statistic = std::numeric_limits<double>::infinity();
        r.independent = false;
        return r;
    }
}

namespace {
double column_correlation(const std::vector<int>& a, const std::vector<int>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0 || sbb <= 0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}
}  // namespace

FilterResult filter_factors(std::span<const FactorSpec> candidates, const FactorTable& table,
                            std::span<const std::string> mb_so_far, std::span<const std::string> existing, double alpha,
                            double redundancy_threshold) {
    FilterResult out;
    std::vector<std::string> kept(existing.begin(), existing.end());
    for (const auto& c : candidates) {
        if (!table.has(c.name)) throw InvariantError("no annotated column for factor \"" + c.name + "\"");
        const auto& col = table.column(c.name);
        const auto dep = dependence_test(table, c.name, mb_so_far, alpha);
        if (!dep.independent) ++out.n_valid;

        std::optional<std::string> twin;
        for (const auto& k : kept) {
            if (normalize_factor_name(k) == normalize_factor_name(c.name)) continue;
            const double r = column_correlation(col, table.column(k));
            if (std::abs(r) > redundancy_threshold) {
                std::ostringstream d;
                d << "|corr| with " << k << " = " << std::abs(r);
                twin = d.str();
                break;
            }
        }
        if (twin) {
            out.rejected.push_back({c, RejectReason::Redundant, *twin});
            continue;
        }
        if (dep.independent) {
            std::ostringstream d;
            d << "independent of the target given {" << join(mb_so_far, ", ") << "} (p = " << dep.p_value << ")";
            out.rejected.push_back({c, RejectReason::Independent, d.str()});
            continue;
        }
        out.accepted.push_back(c);
        kept.push_back(c.name);
    }
    return out;
}

std::vector<FactorSpec> replay_pool(FactorPool& pool, const FactorTable& table, std::span<const std::string> mb_so_far,
                                    double alpha, int round) {
    std::vector<FactorSpec> revived;
    for (const auto& spec : pool.with_status(PoolStatus::Replayable)) {
        const auto dep = dependence_test(table, spec.name, mb_so_far, alpha);
        if (dep.independent) continue;
        std::ostringstream reason;
        reason << "replay: dependent given {" << join(mb_so_far, ", ") << "} (p = " << dep.p_value << ")";
        pool.set_status(spec.name, PoolStatus::Active, round, reason.str());
        revived.push_back(spec);
    }
    return revived;
}

}  // namespace coat::proposer
