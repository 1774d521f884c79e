#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace coat {

/// One unstructured observation and its target label.
struct RawSample {
    std::string id;
    std::string text;
    int target = 0;

    bool operator==(const RawSample&) const = default;
};

/// Ordered collection of samples plus the target's name and finite integer domain.
/// Validated on construction and immutable afterwards.
class Dataset {
public:
    Dataset(std::vector<RawSample> samples, std::string target_name, std::vector<int> target_domain,
            std::map<std::string, std::string> metadata = {});

    const std::vector<RawSample>& samples() const noexcept { return samples_; }
    const RawSample& sample(std::size_t i) const { return samples_.at(i); }
    std::size_t size() const noexcept { return samples_.size(); }
    const std::string& target_name() const noexcept { return target_name_; }
    const std::vector<int>& target_domain() const noexcept { return target_domain_; }
    const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }

    std::vector<std::string> ids() const;
    std::vector<int> targets() const;
    /// Index of the sample with `id`, or nullopt.
    std::optional<std::size_t> find(std::string_view id) const;

    bool operator==(const Dataset&) const = default;

private:
    std::vector<RawSample> samples_;
    std::string target_name_;
    std::vector<int> target_domain_;
    std::map<std::string, std::string> metadata_;
};

/// Discrete level set a factor maps into. Default {-1, 0, 1}.
struct ValueSpace {
    std::vector<int> levels{-1, 0, 1};
    std::vector<std::string> level_meanings{"negative", "not mentioned", "positive"};

    static ValueSpace ternary() { return {}; }
    /// Consecutive integers lo..hi with generic meanings.
    static ValueSpace range(int lo, int hi);

    void validate() const;
    bool contains(int v) const;
    /// 0 when it is a level, else the median level.
    int neutral() const;
    std::string describe() const;  // "-1, 0, 1"

    bool operator==(const ValueSpace&) const = default;
};

enum class FactorOrigin { LlmRound, Scripted, GroundTruth };

std::string to_string(FactorOrigin o);
FactorOrigin factor_origin_from_string(std::string_view s);

/// A named high-level factor with a per-level annotation guideline.
struct FactorSpec {
    std::string name;
    std::string description;
    /// One rule per level of value_space, aligned by index.
    std::vector<std::string> guideline;
    ValueSpace value_space;
    FactorOrigin origin = FactorOrigin::Scripted;
    int round = 0;

    void validate() const;
    /// Guideline rendered as "level: rule" lines.
    std::string guideline_text() const;

    bool operator==(const FactorSpec&) const = default;
};

/// Trim, lowercase, and map whitespace runs to a single underscore.
std::string normalize_factor_name(std::string_view name);

/// Samples x factors matrix of level values plus the target column.
/// Every cell is checked against its factor's value space on construction.
class FactorTable {
public:
    FactorTable(std::vector<FactorSpec> factors, std::vector<std::vector<int>> columns, std::vector<std::string> sample_ids,
                std::vector<int> target, std::string target_name);

    /// A table with no factor columns, aligned to `dataset`.
    static FactorTable empty_for(const Dataset& dataset);

    std::size_t rows() const noexcept { return sample_ids_.size(); }
    std::size_t factor_count() const noexcept { return factors_.size(); }
    const std::vector<FactorSpec>& factors() const noexcept { return factors_; }
    std::vector<std::string> factor_order() const;
    const std::vector<std::string>& sample_ids() const noexcept { return sample_ids_; }
    const std::vector<int>& target() const noexcept { return target_; }
    const std::string& target_name() const noexcept { return target_name_; }

    const std::vector<int>& column(std::size_t j) const { return columns_.at(j); }
    const std::vector<int>& column(std::string_view name) const;
    int cell(std::size_t row, std::size_t col) const { return columns_.at(col).at(row); }
    std::optional<std::size_t> index_of(std::string_view name) const;
    bool has(std::string_view name) const { return index_of(name).has_value(); }

    /// Sub-table with the named factors, in the given order.
    FactorTable select(std::span<const std::string> names) const;

    /// Numeric n x (k+1) matrix of the named factor columns followed by the target.
    Eigen::MatrixXd numeric_with_target(std::span<const std::string> names) const;
    /// All factor columns followed by the target.
    Eigen::MatrixXd numeric_with_target() const;

    bool operator==(const FactorTable&) const = default;

private:
    std::vector<FactorSpec> factors_;
    std::vector<std::vector<int>> columns_;
    std::vector<std::string> sample_ids_;
    std::vector<int> target_;
    std::string target_name_;
};

/// Column-concatenate `a` then `b`. Both must share sample ids and targets; names must be disjoint.
FactorTable merge_factor_tables(const FactorTable& a, const FactorTable& b);

// Dataset JSON-Lines I/O.
Dataset load_dataset(const std::filesystem::path& path);
Dataset parse_dataset(std::string_view jsonl);
std::string serialize_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::filesystem::path& path);

// FactorTable CSV I/O. Without specs, each column's value space is {-1,0,1} widened to cover observed values.
std::string serialize_factor_table_csv(const FactorTable& t);
FactorTable parse_factor_table_csv(std::string_view csv, std::span<const FactorSpec> specs = {});
void save_factor_table_csv(const FactorTable& t, const std::filesystem::path& path);
FactorTable load_factor_table_csv(const std::filesystem::path& path, std::span<const FactorSpec> specs = {});

// FactorSpec JSON I/O.
nlohmann::json factor_spec_to_json(const FactorSpec& spec);
/// Validates the parsed spec.
FactorSpec factor_spec_from_json(const nlohmann::json& j);
std::string serialize_factor_specs(std::span<const FactorSpec> specs);
std::vector<FactorSpec> parse_factor_specs(std::string_view json);
void save_factor_specs(std::span<const FactorSpec> specs, const std::filesystem::path& path);
std::vector<FactorSpec> load_factor_specs(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace coat
