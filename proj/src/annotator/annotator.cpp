#include "coat/annotator.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>
#include <thread>

#include <unistd.h>

#include "coat/errors.hpp"

namespace coat::annotator {

std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::Llm: return "llm";
        case BackendKind::Oracle: return "oracle";
        case BackendKind::External: return "external";
    }
    return "llm";
}

std::string default_annotation_template() {
    return "You are annotating one sample for the factor \"{factor_name}\".\n\n"
           "Guideline (value: when to use it):\n{guideline}\n"
           "Allowed values: {levels}\n\n"
           "Sample:\n{sample_text}\n\n"
           "Answer with exactly one integer from the allowed values and nothing else.\n";
}

namespace {
void replace_all(std::string& s, std::string_view from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
}
}  // namespace

std::string render_annotation_prompt(std::string_view tmpl, const FactorSpec& factor, const RawSample& sample) {
    std::string out(tmpl);
    // sample text goes last so braces inside it are never expanded
    replace_all(out, "{factor_name}", factor.name);
    replace_all(out, "{guideline}", factor.guideline_text());
    replace_all(out, "{levels}", factor.value_space.describe());
    replace_all(out, "{sample_text}", sample.text);
    return out;
}

std::optional<int> parse_level(std::string_view reply) {
    static const std::regex re(R"([-+]?\d+)");
    std::match_results<std::string_view::const_iterator> m;
    if (!std::regex_search(reply.begin(), reply.end(), m, re)) return std::nullopt;
    try {
        return std::stoi(m.str());
    } catch (const std::out_of_range&) {
        return std::nullopt;
    }
}

LlmBackend::LlmBackend(std::shared_ptr<llm::Client> client, std::string prompt_template)
    : client_(std::move(client)), template_(std::move(prompt_template)) {
    if (!client_) throw InvariantError("LLM annotator needs a client");
}

int LlmBackend::annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) {
    llm::ChatRequest req;
    req.system = "You are a careful annotator.";
    req.user = render_annotation_prompt(template_, factor, sample);
    req.temperature = llm::kAnnotationTemperature;
    req.max_tokens = 16;
    req.tag = "annotate:" + factor.name;
    ++log.requests;
    const auto first = client_->complete(req);
    if (const auto v = parse_level(first.content); v && factor.value_space.contains(*v)) return *v;

    ++log.retries;
    llm::ChatRequest again = req;
    again.user += "\nYour previous answer \"" + first.content + "\" is not one of " + factor.value_space.describe() +
                  ". Reply with a single allowed integer.\n";
    again.tag = "annotate-retry:" + factor.name;
    ++log.requests;
    const auto second = client_->complete(again);
    if (const auto v = parse_level(second.content); v && factor.value_space.contains(*v)) return *v;

    ++log.defaulted;
    const int neutral = factor.value_space.neutral();
    log.warnings.push_back("sample " + sample.id + ", factor " + factor.name + ": no valid level after one re-ask, using " +
                           std::to_string(neutral));
    return neutral;
}

OracleBackend::OracleBackend(Latents latents) {
    for (auto& [k, v] : latents) latents_[normalize_factor_name(k)] = std::move(v);
}

void OracleBackend::check(const FactorSpec& factor) const {
    if (!latents_.contains(normalize_factor_name(factor.name)))
        throw InvariantError("oracle annotator has no latent values for factor \"" + factor.name + "\"");
}

int OracleBackend::annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) {
    check(factor);
    ++log.requests;
    const auto& col = latents_.at(normalize_factor_name(factor.name));
    const auto it = col.find(sample.id);
    if (it == col.end())
        throw InvariantError("oracle annotator has no value of \"" + factor.name + "\" for sample " + sample.id);
    if (!factor.value_space.contains(it->second))
        throw InvariantError("latent value of \"" + factor.name + "\" is outside the declared value space");
    return it->second;
}

ExternalBackend::ExternalBackend(std::map<std::string, std::string> commands, std::string fallback)
    : fallback_(std::move(fallback)) {
    for (auto& [k, v] : commands) commands_[normalize_factor_name(k)] = std::move(v);
}

const std::string* ExternalBackend::command_for(const FactorSpec& factor) const {
    const auto it = commands_.find(normalize_factor_name(factor.name));
    if (it != commands_.end()) return &it->second;
    return fallback_.empty() ? nullptr : &fallback_;
}

void ExternalBackend::check(const FactorSpec& factor) const {
    if (!command_for(factor)) throw ConfigError("no external command configured for factor \"" + factor.name + "\"");
}

int ExternalBackend::annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) {
    const std::string* cmd = command_for(factor);
    if (!cmd) throw ConfigError("no external command configured for factor \"" + factor.name + "\"");
    const nlohmann::json payload{{"id", sample.id}, {"text", sample.text}, {"y", sample.target}, {"factor", factor.name}};

    char tmpl[] = "/tmp/coat-sample-XXXXXX";
    const int fd = mkstemp(tmpl);
    if (fd < 0) throw Error("cannot create a temporary file for the external annotator");
    const std::string body = payload.dump();
    const bool wrote = ::write(fd, body.data(), body.size()) == static_cast<ssize_t>(body.size());
    ::close(fd);
    const std::filesystem::path input(tmpl);
    if (!wrote) {
        std::filesystem::remove(input);
        throw Error("cannot write the external annotator input");
    }
    const std::string full = *cmd + " < '" + input.string() + "'";
    std::string out;
    FILE* pipe = ::popen(full.c_str(), "r");
    if (!pipe) {
        std::filesystem::remove(input);
        throw Error("cannot start external annotator: " + *cmd);
    }
    std::array<char, 256> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
    const int status = ::pclose(pipe);
    std::filesystem::remove(input);
    ++log.requests;
    if (status != 0) throw Error("external annotator exited with status " + std::to_string(status) + ": " + *cmd);
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    const auto v = parse_level(out);
    if (v && factor.value_space.contains(*v)) return *v;
    ++log.defaulted;
    log.warnings.push_back("sample " + sample.id + ", factor " + factor.name + ": external annotator printed \"" + out +
                           "\", using the neutral level");
    return factor.value_space.neutral();
}

FactorTable annotate(const Dataset& dataset, std::span<const FactorSpec> factors, Backend& backend, std::uint64_t /*seed*/,
                     AnnotationLog* log, int jobs) {
    for (const auto& f : factors) {
        f.validate();
        backend.check(f);
    }
    const std::size_t n = dataset.size();
    std::vector<std::vector<int>> columns(factors.size(), std::vector<int>(n, 0));
    AnnotationLog local;
    std::mutex mu;
    std::exception_ptr failure;

    auto work = [&](std::size_t begin, std::size_t stride) {
        AnnotationLog mine;
        try {
            for (std::size_t i = begin; i < n; i += stride)
                for (std::size_t f = 0; f < factors.size(); ++f)
                    columns[f][i] = backend.annotate(dataset.sample(i), factors[f], mine);
        } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
        }
        std::lock_guard lock(mu);
        local.requests += mine.requests;
        local.retries += mine.retries;
        local.defaulted += mine.defaulted;
        local.warnings.insert(local.warnings.end(), mine.warnings.begin(), mine.warnings.end());
    };
    const auto workers = static_cast<std::size_t>(std::max(1, jobs));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    std::sort(local.warnings.begin(), local.warnings.end());
    for (const auto& w : local.warnings) std::clog << "[annotator] " << w << "\n";
    if (log) {
        log->requests += local.requests;
        log->retries += local.retries;
        log->defaulted += local.defaulted;
        log->warnings.insert(log->warnings.end(), local.warnings.begin(), local.warnings.end());
    }
    return FactorTable(std::vector<FactorSpec>(factors.begin(), factors.end()), std::move(columns), dataset.ids(),
                       dataset.targets(), dataset.target_name());
}

std::map<std::string, double> annotation_accuracy(const FactorTable& table, const FactorTable& truth,
                                                  std::span<const std::pair<std::string, std::string>> mapping) {
    if (table.sample_ids() != truth.sample_ids()) throw InvariantError("annotation_accuracy: samples are not aligned");
    std::map<std::string, double> out;
    for (const auto& name : table.factor_order()) {
        const auto it = std::find_if(mapping.begin(), mapping.end(), [&](const auto& p) {
            return normalize_factor_name(p.first) == normalize_factor_name(name);
        });
        if (it == mapping.end()) throw InvariantError("factor \"" + name + "\" has no ground-truth counterpart");
        const auto& a = table.column(name);
        const auto& b = truth.column(it->second);
        std::size_t hit = 0;
        for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
        out[name] = a.empty() ? 1.0 : static_cast<double>(hit) / static_cast<double>(a.size());
    }
    return out;
}

}  // namespace coat::annotator
