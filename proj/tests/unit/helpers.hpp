#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "coat/core.hpp"

namespace testing {

/// Fresh directory under /tmp, removed on scope exit.
struct TempDir {
    std::filesystem::path path;
    TempDir() {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("coat-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::filesystem::path operator/(const std::string& p) const { return path / p; }
};

inline coat::FactorSpec ternary(const std::string& name) {
    coat::FactorSpec f;
    f.name = name;
    f.description = name + " of the item";
    f.guideline = {"low " + name, "no mention of " + name, "high " + name};
    return f;
}

/// Table with ternary factor columns named by `names` and ids s0, s1, ...
inline coat::FactorTable table_of(const std::vector<std::string>& names, const std::vector<std::vector<int>>& cols,
                                  const std::vector<int>& y, const std::string& target = "y") {
    std::vector<coat::FactorSpec> specs;
    for (const auto& n : names) specs.push_back(ternary(n));
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < y.size(); ++i) ids.push_back("s" + std::to_string(i));
    return coat::FactorTable(specs, cols, ids, y, target);
}

}  // namespace testing
