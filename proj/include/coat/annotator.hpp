#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "coat/core.hpp"
#include "coat/llm.hpp"

namespace coat::annotator {

enum class BackendKind { Llm, Oracle, External };
std::string to_string(BackendKind k);

/// Counters gathered while annotating; shared across worker threads.
struct AnnotationLog {
    int requests = 0;
    int retries = 0;
    int defaulted = 0;
    std::vector<std::string> warnings;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendKind kind() const = 0;
    /// One value for `sample` under `factor`; must lie in the factor's value space.
    virtual int annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) = 0;
    /// Throws when the backend cannot serve `factor` at all.
    virtual void check(const FactorSpec& /*factor*/) const {}
};

/// Placeholders: {factor_name}, {guideline}, {levels}, {sample_text}.
std::string default_annotation_template();
std::string render_annotation_prompt(std::string_view tmpl, const FactorSpec& factor, const RawSample& sample);

/// First integer in the reply, if any.
std::optional<int> parse_level(std::string_view reply);

class LlmBackend : public Backend {
public:
    LlmBackend(std::shared_ptr<llm::Client> client, std::string prompt_template = default_annotation_template());
    BackendKind kind() const override { return BackendKind::Llm; }
    int annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) override;

private:
    std::shared_ptr<llm::Client> client_;
    std::string template_;
};

/// Reads latent ground-truth levels: factor name -> sample id -> level.
class OracleBackend : public Backend {
public:
    using Latents = std::map<std::string, std::map<std::string, int>>;
    explicit OracleBackend(Latents latents);
    BackendKind kind() const override { return BackendKind::Oracle; }
    int annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) override;
    void check(const FactorSpec& factor) const override;

private:
    Latents latents_;
};

/// Runs a shell command per sample: sample JSON on stdin, one integer on stdout.
class ExternalBackend : public Backend {
public:
    /// `commands` maps factor name to command line; `fallback` serves the rest (empty = none).
    ExternalBackend(std::map<std::string, std::string> commands, std::string fallback = {});
    BackendKind kind() const override { return BackendKind::External; }
    int annotate(const RawSample& sample, const FactorSpec& factor, AnnotationLog& log) override;
    void check(const FactorSpec& factor) const override;

private:
    const std::string* command_for(const FactorSpec& factor) const;
    std::map<std::string, std::string> commands_;
    std::string fallback_;
};

/// One column per factor, rows in dataset order regardless of completion order.
/// `jobs` > 1 fans samples out over worker threads.
FactorTable annotate(const Dataset& dataset, std::span<const FactorSpec> factors, Backend& backend, std::uint64_t seed,
                     AnnotationLog* log = nullptr, int jobs = 1);

/// Exact-match rate per annotated factor against its mapped truth column.
std::map<std::string, double> annotation_accuracy(const FactorTable& table, const FactorTable& truth,
                                                  std::span<const std::pair<std::string, std::string>> mapping);

}  // namespace coat::annotator
