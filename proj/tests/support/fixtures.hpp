#pragma once

#include "handmesh/config.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace handmesh::testing {

/// Small enough that a training step takes milliseconds; still exercises the
/// full keypoint-sampling pipeline and a two-layer cascade.
inline ExperimentConfig tiny_experiment() {
    ExperimentConfig c;
    c.model.backbone.channels = {4, 4, 8, 8, 8};
    c.model.sampler = {SamplerVariant::Keypoint, 14, UpsampleScheme::Double2x};
    c.model.decoder.n = {1, 1};
    c.model.decoder.d = {42, kNumVertices};
    c.model.decoder.m = {MixerKind::Attention, MixerKind::Attention};
    c.model.decoder.c = {16, 8};
    c.model.decoder.heads = 2;
    c.steps = 3;
    c.batch_size = 2;
    c.seed = 5;
    c.dataset = DatasetSpec{"", 6, 77};
    return c;
}

/// Fresh directory under the build tree's temp area, removed on destruction.
class TempDir {
   public:
    TempDir() {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        path_ = std::filesystem::temp_directory_path() / "handmesh_tests" /
                (std::string(info->test_suite_name()) + "." + info->name());
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    std::string str() const { return path_.string(); }
    std::string operator/(const std::string& rel) const { return (path_ / rel).string(); }

   private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace handmesh::testing
