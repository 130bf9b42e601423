#include "handmesh/dataset.hpp"

#include <cstdio>
#include <filesystem>

namespace handmesh {
namespace fs = std::filesystem;

namespace {

Tensor<float> to_tensor(const RowMatrix<double>& m) { return Tensor<float>::from_matrix(m); }

std::string record_name(Index i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%06ld.rec", static_cast<long>(i));
    return buf;
}

}  // namespace

Example to_example(const HandSample& s) {
    Example e;
    e.input = s.input;
    e.vertices = to_tensor(s.vertices);
    e.joints_3d = to_tensor(s.joints_3d);
    e.joints_2d = to_tensor(s.joints_2d);
    e.camera = Tensor<float>({3});
    e.camera[0] = static_cast<float>(s.camera.scale);
    e.camera[1] = static_cast<float>(s.camera.translation.x());
    e.camera[2] = static_cast<float>(s.camera.translation.y());
    return e;
}

Record to_record(const HandSample& s) {
    const Example e = to_example(s);
    Record r;
    r.tensors.emplace("input", e.input);
    r.tensors.emplace("V_3d", e.vertices);
    r.tensors.emplace("J_3d", e.joints_3d);
    r.tensors.emplace("J_2d", e.joints_2d);
    r.tensors.emplace("camera", e.camera);
    r.meta = {{"seed", s.seed}};
    return r;
}

Example example_from_record(const Record& r) {
    Example e;
    e.input = r.at("input");
    e.vertices = r.at("V_3d");
    e.joints_3d = r.at("J_3d");
    e.joints_2d = r.at("J_2d");
    e.camera = r.at("camera");
    if (e.vertices.shape() != Shape{kNumVertices, 3} || e.joints_3d.shape() != Shape{kNumJoints, 3} ||
        e.joints_2d.shape() != Shape{kNumJoints, 2}) {
        throw RecordError("record tensors have unexpected shapes");
    }
    return e;
}

ProceduralDataset::ProceduralDataset(Index count, std::uint64_t seed) : count_(count), seed_(seed) {
    if (count < 1) throw ConfigError("procedural dataset needs count >= 1");
}

Example ProceduralDataset::get(Index i) const {
    if (i < 0 || i >= count_) throw std::out_of_range("dataset index out of range");
    return to_example(generate_sample(default_hand(), sample_seed(seed_, static_cast<std::uint64_t>(i))));
}

std::string ProceduralDataset::describe() const {
    return "procedural(count=" + std::to_string(count_) + ", seed=" + std::to_string(seed_) + ")";
}

DirectoryDataset::DirectoryDataset(const std::string& dir) : dir_(dir) {
    const fs::path manifest = fs::path(dir) / "manifest.json";
    if (!fs::exists(manifest)) throw ConfigError("dataset '" + dir + "' has no manifest.json");
    manifest_ = read_json_file(manifest.string());
    if (manifest_.value("format_version", 0) != 1) throw ConfigError("dataset '" + dir + "': unsupported format");
    for (const auto& f : manifest_.at("records")) files_.push_back((fs::path(dir) / f.get<std::string>()).string());
    if (static_cast<Index>(files_.size()) != manifest_.at("count").get<Index>()) {
        throw ConfigError("dataset '" + dir + "': manifest count does not match its record list");
    }
}

Example DirectoryDataset::get(Index i) const {
    return example_from_record(read_record(files_.at(static_cast<std::size_t>(i))));
}

CachedDataset::CachedDataset(const Dataset& source) : description_("cached " + source.describe()) {
    examples_.reserve(static_cast<std::size_t>(source.size()));
    for (Index i = 0; i < source.size(); ++i) examples_.push_back(source.get(i));
}

std::unique_ptr<Dataset> open_dataset(const DatasetSpec& spec) {
    if (spec.procedural()) return std::make_unique<ProceduralDataset>(spec.count, spec.seed);
    return std::make_unique<DirectoryDataset>(spec.path);
}

json dataset_manifest(Index count, std::uint64_t seed) {
    json channels = json::array();
    for (Index j = 0; j < kNumJoints; ++j) channels.push_back("heatmap_" + std::to_string(j));
    channels.push_back("silhouette");
    json records = json::array();
    for (Index i = 0; i < count; ++i) records.push_back(record_name(i));
    return {{"format_version", 1},
            {"count", count},
            {"seed", seed},
            {"image_side", kImageSide},
            {"channels", channels},
            {"layout", "CHW"},
            {"dtype", "float32-le"},
            {"units", {{"V_3d", "mm"}, {"J_3d", "mm"}, {"J_2d", "px"}, {"camera", "[scale px/mm, tx px, ty px]"}}},
            {"joint_order", "wrist, thumb(4), index(4), middle(4), ring(4), pinky(4); base to tip"},
            {"records", records}};
}

void write_dataset(const std::string& dir, Index count, std::uint64_t seed) {
    if (count < 1) throw ConfigError("gen-data needs n >= 1");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw RecordError("cannot create dataset directory '" + dir + "'");
    for (Index i = 0; i < count; ++i) {
        const HandSample s = generate_sample(default_hand(), sample_seed(seed, static_cast<std::uint64_t>(i)));
        write_record((fs::path(dir) / record_name(i)).string(), to_record(s));
    }
    write_json_file((fs::path(dir) / "manifest.json").string(), dataset_manifest(count, seed));
}

}  // namespace handmesh
