#pragma once

#include "handmesh/config.hpp"
#include "handmesh/record_io.hpp"
#include "handmesh/synthetic_hand.hpp"

#include <memory>
#include <string>
#include <vector>

namespace handmesh {

/// One training/evaluation pair in the training precision.
struct Example {
    Tensor<float> input;      // kInputChannels × 224 × 224
    Tensor<float> vertices;   // 778×3 mm
    Tensor<float> joints_3d;  // 21×3 mm
    Tensor<float> joints_2d;  // 21×2 px
    Tensor<float> camera;     // scale, tx, ty
};

Example to_example(const HandSample& s);
Record to_record(const HandSample& s);
Example example_from_record(const Record& r);

class Dataset {
   public:
    virtual ~Dataset() = default;
    virtual Index size() const = 0;
    virtual Example get(Index i) const = 0;
    virtual std::string describe() const = 0;
};

/// Sample i is generated on demand from sample_seed(seed, i).
class ProceduralDataset : public Dataset {
   public:
    ProceduralDataset(Index count, std::uint64_t seed);
    Index size() const override { return count_; }
    Example get(Index i) const override;
    std::string describe() const override;

   private:
    Index count_;
    std::uint64_t seed_;
};

/// Directory written by write_dataset: manifest.json plus one record per sample.
class DirectoryDataset : public Dataset {
   public:
    explicit DirectoryDataset(const std::string& dir);
    Index size() const override { return static_cast<Index>(files_.size()); }
    Example get(Index i) const override;
    std::string describe() const override { return dir_; }
    const json& manifest() const { return manifest_; }

   private:
    std::string dir_;
    json manifest_;
    std::vector<std::string> files_;
};

/// Holds every example of another dataset in memory.
class CachedDataset : public Dataset {
   public:
    explicit CachedDataset(const Dataset& source);
    Index size() const override { return static_cast<Index>(examples_.size()); }
    Example get(Index i) const override { return examples_.at(static_cast<std::size_t>(i)); }
    const Example& ref(Index i) const { return examples_.at(static_cast<std::size_t>(i)); }
    std::string describe() const override { return description_; }

   private:
    std::vector<Example> examples_;
    std::string description_;
};

std::unique_ptr<Dataset> open_dataset(const DatasetSpec& spec);

json dataset_manifest(Index count, std::uint64_t seed);
/// Writes `count` samples with manifest.json into `dir` (created if needed).
void write_dataset(const std::string& dir, Index count, std::uint64_t seed);

}  // namespace handmesh
