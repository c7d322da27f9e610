// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "cdemapper/evaluation.hpp"
#include "cdemapper/pipeline.hpp"
#include "cdemapper/service.hpp"

namespace testing_support {

inline std::string fixture(const std::string& name) {
    return std::string(CDEMAPPER_FIXTURES) + "/" + name;
}

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("cdemapper-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& child = {}) const { return child.empty() ? path_.string() : (path_ / child).string(); }

private:
    std::filesystem::path path_;
};

/// Fixture corpus indexed once per process with mock embeddings.
inline std::shared_ptr<const cdemapper::IndexBundle> fixture_bundle() {
    static auto bundle = [] {
        auto load = cdemapper::load_corpus_file(fixture("corpus.json"));
        auto gw = cdemapper::make_mock_gateway();
        return std::make_shared<const cdemapper::IndexBundle>(
            cdemapper::build_index(std::move(load.records), {}, "2024-06-01", gw.get()));
    }();
    return bundle;
}

inline const std::vector<cdemapper::GoldDataset>& fixture_gold() {
    static auto gold = cdemapper::load_gold_file(fixture("gold.csv"));
    return gold;
}

} // namespace testing_support
