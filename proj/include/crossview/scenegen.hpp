#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace crossview::scenegen {

// 12 procedural glyph silhouettes stand in for object categories.
inline constexpr int kNumGlyphs = 12;
inline constexpr int kAttrTableWidth = 4;

struct GenConfig {
    // 80-10-10 scene split.
    int train_scenes = 400;
    int val_scenes = 50;
    int test_scenes = 50;
    int num_categories = 12;
    int num_colors = 8;
    int patch_size = 16;       // P: patches are P x P x 3
    int num_binary_attrs = 4;  // B
    int min_objects = 2;
    int max_objects = 20;
    double noise_sigma = 0.01;      // per-pixel gaussian noise after compositing
    double background_level = 0.1;  // background pixels uniform in [0, level)
    double p_occlusion = 0.1;       // per-view object dropout probability

    void validate() const;  // throws ConfigError
};

GenConfig config_from_json(const std::string& text);  // unknown keys rejected
std::string config_to_json(const GenConfig& config);  // canonical form, digest input

struct ObjectSpec {
    int object_id = 0;                     // unique within the dataset
    int category = 0;                      // [0, num_categories)
    int color = 0;                         // [0, num_colors)
    std::vector<std::uint8_t> binary_attrs;  // derived from category
    double base_scale = 1.0;               // [0.5, 1.0]
};

struct SceneSpec {
    int scene_id = 0;
    std::vector<ObjectSpec> objects;  // 2..20
    std::uint64_t rng_seed = 0;
};

struct ViewParams {
    double scale_jitter = 1.0;  // [0.8, 1.25]
    double gain = 1.0;          // [0.7, 1.3]
    double noise_sigma = 0.0;
    int translate_x = 0;        // [-2, 2]
    int translate_y = 0;

    static ViewParams canonical() { return ViewParams{}; }
};

struct Patch {
    std::vector<float> pixels;  // channel-major [ch][row][col], values in [0, 1]
    int patch_size = 0;
    int object_id = 0;
    int view_index = 0;
    // ground-truth labels, used only by evaluation and the supervised mode
    int category = 0;
    int color = 0;
    std::vector<std::uint8_t> binary_attrs;
};

enum class Split { train, val, test };
const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestRecord {
    int index = 0;
    std::int64_t offset_bytes = 0;
    int object_id = 0;
    int scene_id = 0;
    int view = 0;
    int category = 0;
    int color = 0;
    std::vector<std::uint8_t> binary_attrs;
    Split split = Split::train;
};

struct Dataset {
    GenConfig config;
    std::uint64_t seed = 0;
    std::vector<SceneSpec> scenes;      // ordered by scene_id
    std::vector<Split> scene_split;     // parallel to scenes
    std::vector<ManifestRecord> manifest;  // ordered by (scene_id, object_id, view)
    std::vector<float> pixels;          // flat patch store, patch_floats() per patch

    int patch_floats() const { return config.patch_size * config.patch_size * 3; }
    const SceneSpec& scene(int scene_id) const;  // throws LookupError
    std::vector<int> split_scene_ids(Split s) const;
    Patch patch(int manifest_index) const;
    // manifest index of (scene, local object position, view)
    int manifest_index(int scene_id, int object_pos, int view) const;
};

// Two aligned object lists from two views of one scene.
struct PairBatch {
    int scene_id = 0;
    std::vector<Patch> view0;
    std::vector<Patch> view1;

    std::vector<int> ids0() const;
    std::vector<int> ids1() const;
};

// Fixed category -> binary attribute table (each attribute true for exactly
// half of the 12 glyph categories, so shuffled-probe chance sits at 50%).
bool attr_table(int category, int attr);
std::vector<std::uint8_t> attrs_for_category(int category, int num_attrs);

// Glyph silhouette predicate in normalized coordinates (u right, v up), unit
// support roughly [-1, 1]^2.
bool glyph_mask(int category, double u, double v);

// Palette of num_colors RGB triples with components in {0, 0.5, 1}.
const float* palette_color(int color);

Patch render_object(const ObjectSpec& spec, const ViewParams& view, std::uint64_t seed,
                    const GenConfig& config);

ViewParams draw_view_params(std::uint64_t seed, const GenConfig& config);

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed);

// Stored-view pair with per-view occlusion dropout (min 2 survivors per view).
PairBatch sample_frame_pair(const Dataset& dataset, int scene_id, std::uint64_t seed);
PairBatch sample_frame_pair(const Dataset& dataset, int scene_id, std::uint64_t seed,
                            double p_occlusion);

// Ordered frame-pairs of one scene with fresh per-frame jitter; stands in for
// a video of the scene.
std::vector<PairBatch> make_sequence(const SceneSpec& scene, const GenConfig& config,
                                     int num_frames, std::uint64_t seed);

// Scene used by the online protocol (object count fixed, not sampled).
SceneSpec make_scene_fixed_objects(const GenConfig& config, int scene_id, int num_objects,
                                   std::uint64_t seed);

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace crossview::scenegen
