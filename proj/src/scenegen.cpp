#include "crossview/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/io.hpp"
#include "crossview/rng.hpp"

namespace crossview::scenegen {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr double kClampEps = 0.0;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Each attribute is true for exactly 6 of the 12 categories; attribute 0
// covers {3,4,7,10} plus {2,6}.
constexpr std::uint8_t kAttrTable[kAttrTableWidth][kNumGlyphs] = {
    {0, 0, 1, 1, 1, 0, 1, 1, 0, 0, 1, 0},
    {1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0},
    {1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0},
    {0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0},
};

// 8 colors with components in {0, 0.5, 1}; exact in float32.
constexpr float kPalette[8][3] = {
    {1.0f, 0.0f, 0.0f},  // red
    {0.0f, 1.0f, 0.0f},  // green
    {0.0f, 0.0f, 1.0f},  // blue
    {1.0f, 1.0f, 0.0f},  // yellow
    {1.0f, 0.0f, 1.0f},  // magenta
    {0.0f, 1.0f, 1.0f},  // cyan
    {1.0f, 1.0f, 1.0f},  // white
    {1.0f, 0.5f, 0.0f},  // orange
};

}  // namespace

void GenConfig::validate() const {
    if (num_categories < 2 || num_categories > kNumGlyphs) {
        throw ConfigError("num_categories must be in [2, 12]");
    }
    if (num_colors < 1 || num_colors > 8) {
        throw ConfigError("num_colors must be in [1, 8]");
    }
    if (patch_size < 4) {
        throw ConfigError("patch_size must be >= 4");
    }
    if (num_binary_attrs < 0 || num_binary_attrs > kAttrTableWidth) {
        throw ConfigError("num_binary_attrs must be in [0, 4]");
    }
    if (min_objects < 2 || max_objects > 20 || min_objects > max_objects) {
        throw ConfigError("object count range must satisfy 2 <= min <= max <= 20");
    }
    if (train_scenes < 1 || val_scenes < 0 || test_scenes < 0) {
        throw ConfigError("scene counts must be positive (train) / non-negative (val, test)");
    }
    if (noise_sigma < 0.0) {
        throw ConfigError("noise_sigma must be >= 0");
    }
    if (background_level < 0.0 || background_level > 1.0) {
        throw ConfigError("background_level must be in [0, 1]");
    }
    if (p_occlusion < 0.0 || p_occlusion > 1.0) {
        throw ConfigError("p_occlusion must be in [0, 1]");
    }
}

GenConfig config_from_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ConfigError("config JSON must be an object");
    }
    GenConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& key = it.key();
        try {
            if (key == "train_scenes") c.train_scenes = it.value().get<int>();
            else if (key == "val_scenes") c.val_scenes = it.value().get<int>();
            else if (key == "test_scenes") c.test_scenes = it.value().get<int>();
            else if (key == "num_categories") c.num_categories = it.value().get<int>();
            else if (key == "num_colors") c.num_colors = it.value().get<int>();
            else if (key == "patch_size") c.patch_size = it.value().get<int>();
            else if (key == "num_binary_attrs") c.num_binary_attrs = it.value().get<int>();
            else if (key == "min_objects") c.min_objects = it.value().get<int>();
            else if (key == "max_objects") c.max_objects = it.value().get<int>();
            else if (key == "noise_sigma") c.noise_sigma = it.value().get<double>();
            else if (key == "background_level") c.background_level = it.value().get<double>();
            else if (key == "p_occlusion") c.p_occlusion = it.value().get<double>();
            else throw ConfigError("unknown config key: " + key);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("bad value for config key '" + key + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

std::string config_to_json(const GenConfig& c) {
    ordered_json j;
    j["train_scenes"] = c.train_scenes;
    j["val_scenes"] = c.val_scenes;
    j["test_scenes"] = c.test_scenes;
    j["num_categories"] = c.num_categories;
    j["num_colors"] = c.num_colors;
    j["patch_size"] = c.patch_size;
    j["num_binary_attrs"] = c.num_binary_attrs;
    j["min_objects"] = c.min_objects;
    j["max_objects"] = c.max_objects;
    j["noise_sigma"] = c.noise_sigma;
    j["background_level"] = c.background_level;
    j["p_occlusion"] = c.p_occlusion;
    return j.dump();
}

const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "train";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::train;
    if (name == "val") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split name: " + name);
}

bool attr_table(int category, int attr) {
    if (category < 0 || category >= kNumGlyphs || attr < 0 || attr >= kAttrTableWidth) {
        throw LookupError("attr_table index out of range");
    }
    return kAttrTable[attr][category] != 0;
}

std::vector<std::uint8_t> attrs_for_category(int category, int num_attrs) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(num_attrs));
    for (int b = 0; b < num_attrs; ++b) {
        out[static_cast<std::size_t>(b)] = attr_table(category, b) ? 1 : 0;
    }
    return out;
}

bool glyph_mask(int category, double u, double v) {
    const double au = std::abs(u);
    const double av = std::abs(v);
    switch (category) {
        case 0:  // circle
            return u * u + v * v <= 0.90 * 0.90;
        case 1:  // square
            return au <= 0.70 && av <= 0.70;
        case 2:  // triangle, apex up
            return v <= 0.80 && v >= -0.70 && au <= 0.60 * (0.80 - v);
        case 3:  // cross
            return (au <= 0.26 && av <= 0.88) || (av <= 0.26 && au <= 0.88);
        case 4:  // ring
            return u * u + v * v <= 0.82 * 0.82 && u * u + v * v >= 0.45 * 0.45;
        case 5:  // horizontal bar
            return av <= 0.30 && au <= 0.90;
        case 6:  // L
            return (u >= -0.80 && u <= -0.32 && av <= 0.86) ||
                   (v >= -0.86 && v <= -0.38 && u >= -0.80 && u <= 0.82);
        case 7:  // T
            return (v >= 0.40 && v <= 0.86 && au <= 0.86) ||
                   (au <= 0.24 && v >= -0.86 && v <= 0.40);
        case 8:  // diamond
            return au + av <= 0.70;
        case 9:  // four-point star
            return std::sqrt(au) + std::sqrt(av) <= 0.85;
        case 10:  // U
            return (au >= 0.34 && au <= 0.80 && av <= 0.86) ||
                   (v >= -0.86 && v <= -0.40 && au <= 0.80);
        case 11:  // H
            return (au >= 0.36 && au <= 0.82 && av <= 0.86) || (av <= 0.22 && au <= 0.82);
        default:
            throw LookupError("glyph category out of range");
    }
}

const float* palette_color(int color) {
    if (color < 0 || color >= 8) {
        throw LookupError("palette color out of range");
    }
    return kPalette[color];
}

ViewParams draw_view_params(std::uint64_t seed, const GenConfig& config) {
    Rng rng(seed);
    ViewParams vp;
    vp.scale_jitter = rng.uniform(0.8, 1.25);
    vp.gain = rng.uniform(0.7, 1.3);
    vp.noise_sigma = config.noise_sigma;
    vp.translate_x = rng.uniform_int(-2, 2);
    vp.translate_y = rng.uniform_int(-2, 2);
    return vp;
}

Patch render_object(const ObjectSpec& spec, const ViewParams& view, std::uint64_t seed,
                    const GenConfig& config) {
    const int p = config.patch_size;
    const int n = p * p * 3;
    Rng rng(seed);

    // Background first so foreground parameters never shift the noise stream.
    std::vector<double> buf(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        buf[static_cast<std::size_t>(i)] = rng.uniform(0.0, config.background_level);
    }

    const double cx = 0.5 * (p - 1) + view.translate_x;
    const double cy = 0.5 * (p - 1) + view.translate_y;
    const double radius = 0.5 * (p - 2) * spec.base_scale * view.scale_jitter;
    const float* color = palette_color(spec.color);
    for (int r = 0; r < p; ++r) {
        for (int c = 0; c < p; ++c) {
            const double u = (c - cx) / radius;
            const double v = (cy - r) / radius;
            if (!glyph_mask(spec.category, u, v)) {
                continue;
            }
            for (int ch = 0; ch < 3; ++ch) {
                buf[static_cast<std::size_t>(ch * p * p + r * p + c)] =
                    clamp01(static_cast<double>(color[ch]) * view.gain);
            }
        }
    }

    if (view.noise_sigma > 0.0) {
        for (int i = 0; i < n; ++i) {
            buf[static_cast<std::size_t>(i)] =
                clamp01(buf[static_cast<std::size_t>(i)] + view.noise_sigma * rng.normal());
        }
    }

    Patch patch;
    patch.patch_size = p;
    patch.object_id = spec.object_id;
    patch.category = spec.category;
    patch.color = spec.color;
    patch.binary_attrs = spec.binary_attrs;
    patch.pixels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        patch.pixels[static_cast<std::size_t>(i)] = static_cast<float>(buf[static_cast<std::size_t>(i)]);
    }
    (void)kClampEps;
    return patch;
}

namespace {

SceneSpec draw_scene(const GenConfig& config, int scene_id, int num_objects, int first_object_id,
                     std::uint64_t dataset_seed) {
    SceneSpec scene;
    scene.scene_id = scene_id;
    scene.rng_seed = derive_seed(dataset_seed, "scene", static_cast<std::uint64_t>(scene_id));
    Rng rng(scene.rng_seed);
    const int n = num_objects > 0
                      ? num_objects
                      : config.min_objects +
                            static_cast<int>(rng.below(static_cast<std::uint64_t>(
                                config.max_objects - config.min_objects + 1)));
    scene.objects.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ObjectSpec obj;
        obj.object_id = first_object_id + i;
        obj.category = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_categories)));
        obj.color = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_colors)));
        // Narrower than the per-view scale jitter, so apparent size is a
        // nuisance rather than a stable identity cue.
        obj.base_scale = rng.uniform(0.85, 1.0);
        obj.binary_attrs = attrs_for_category(obj.category, config.num_binary_attrs);
        scene.objects.push_back(std::move(obj));
    }
    return scene;
}

Patch render_scene_object(const SceneSpec& scene, std::size_t obj_pos, int view,
                          const GenConfig& config, std::uint64_t dataset_seed) {
    const ObjectSpec& obj = scene.objects[obj_pos];
    const auto sid = static_cast<std::uint64_t>(scene.scene_id);
    ViewParams vp = draw_view_params(
        derive_seed(dataset_seed, "view", sid, obj_pos, static_cast<std::uint64_t>(view)), config);
    Patch patch = render_object(
        obj, vp, derive_seed(dataset_seed, "render", sid, obj_pos, static_cast<std::uint64_t>(view)),
        config);
    patch.view_index = view;
    return patch;
}

}  // namespace

SceneSpec make_scene_fixed_objects(const GenConfig& config, int scene_id, int num_objects,
                                   std::uint64_t seed) {
    if (num_objects < 2 || num_objects > 20) {
        throw ConfigError("scene object count must be in [2, 20]");
    }
    return draw_scene(config, scene_id, num_objects, 0, seed);
}

Dataset generate_dataset(const GenConfig& config, std::uint64_t seed) {
    config.validate();
    Dataset ds;
    ds.config = config;
    ds.seed = seed;

    const int total_scenes = config.train_scenes + config.val_scenes + config.test_scenes;
    int next_object_id = 0;
    for (int scene_id = 0; scene_id < total_scenes; ++scene_id) {
        SceneSpec scene = draw_scene(config, scene_id, 0, next_object_id, seed);
        next_object_id += static_cast<int>(scene.objects.size());
        ds.scenes.push_back(std::move(scene));
        ds.scene_split.push_back(scene_id < config.train_scenes ? Split::train
                                 : scene_id < config.train_scenes + config.val_scenes
                                     ? Split::val
                                     : Split::test);
    }

    const int floats_per_patch = ds.patch_floats();
    int index = 0;
    for (int scene_id = 0; scene_id < total_scenes; ++scene_id) {
        const SceneSpec& scene = ds.scenes[static_cast<std::size_t>(scene_id)];
        for (std::size_t pos = 0; pos < scene.objects.size(); ++pos) {
            for (int view = 0; view < 2; ++view) {
                Patch patch = render_scene_object(scene, pos, view, config, seed);
                ManifestRecord rec;
                rec.index = index;
                rec.offset_bytes = static_cast<std::int64_t>(index) * floats_per_patch * 4;
                rec.object_id = patch.object_id;
                rec.scene_id = scene_id;
                rec.view = view;
                rec.category = patch.category;
                rec.color = patch.color;
                rec.binary_attrs = patch.binary_attrs;
                rec.split = ds.scene_split[static_cast<std::size_t>(scene_id)];
                ds.manifest.push_back(std::move(rec));
                ds.pixels.insert(ds.pixels.end(), patch.pixels.begin(), patch.pixels.end());
                ++index;
            }
        }
    }
    return ds;
}

const SceneSpec& Dataset::scene(int scene_id) const {
    if (scene_id < 0 || scene_id >= static_cast<int>(scenes.size())) {
        throw LookupError("unknown scene_id: " + std::to_string(scene_id));
    }
    return scenes[static_cast<std::size_t>(scene_id)];
}

std::vector<int> Dataset::split_scene_ids(Split s) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        if (scene_split[i] == s) {
            out.push_back(scenes[i].scene_id);
        }
    }
    return out;
}

Patch Dataset::patch(int manifest_index) const {
    if (manifest_index < 0 || manifest_index >= static_cast<int>(manifest.size())) {
        throw LookupError("manifest index out of range");
    }
    const ManifestRecord& rec = manifest[static_cast<std::size_t>(manifest_index)];
    Patch p;
    p.patch_size = config.patch_size;
    p.object_id = rec.object_id;
    p.view_index = rec.view;
    p.category = rec.category;
    p.color = rec.color;
    p.binary_attrs = rec.binary_attrs;
    const auto off = static_cast<std::size_t>(rec.offset_bytes / 4);
    p.pixels.assign(pixels.begin() + static_cast<std::ptrdiff_t>(off),
                    pixels.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(patch_floats())));
    return p;
}

int Dataset::manifest_index(int scene_id, int object_pos, int view) const {
    // Manifest is ordered by (scene_id, object position, view); scan per scene.
    // Scenes are contiguous, so locate the scene block first.
    const SceneSpec& sc = scene(scene_id);
    // Patches before this scene:
    int before = 0;
    for (int s = 0; s < scene_id; ++s) {
        before += static_cast<int>(scenes[static_cast<std::size_t>(s)].objects.size()) * 2;
    }
    if (object_pos < 0 || object_pos >= static_cast<int>(sc.objects.size()) || view < 0 || view > 1) {
        throw LookupError("manifest_index arguments out of range");
    }
    return before + object_pos * 2 + view;
}

std::vector<int> PairBatch::ids0() const {
    std::vector<int> ids;
    ids.reserve(view0.size());
    for (const Patch& p : view0) ids.push_back(p.object_id);
    return ids;
}

std::vector<int> PairBatch::ids1() const {
    std::vector<int> ids;
    ids.reserve(view1.size());
    for (const Patch& p : view1) ids.push_back(p.object_id);
    return ids;
}

namespace {

// Per-view dropout with the min-survivor rule: if fewer than 2 objects
// survive, dropped objects are re-added in object order until 2 remain.
std::vector<bool> dropout_keep(Rng& rng, std::size_t count, double p_occ) {
    std::vector<bool> keep(count, true);
    for (std::size_t i = 0; i < count; ++i) {
        if (rng.uniform01() < p_occ) {
            keep[i] = false;
        }
    }
    std::size_t kept = 0;
    for (bool k : keep) kept += k ? 1 : 0;
    const std::size_t min_keep = std::min<std::size_t>(2, count);
    for (std::size_t i = 0; i < count && kept < min_keep; ++i) {
        if (!keep[i]) {
            keep[i] = true;
            ++kept;
        }
    }
    return keep;
}

}  // namespace

PairBatch sample_frame_pair(const Dataset& dataset, int scene_id, std::uint64_t seed) {
    return sample_frame_pair(dataset, scene_id, seed, dataset.config.p_occlusion);
}

PairBatch sample_frame_pair(const Dataset& dataset, int scene_id, std::uint64_t seed,
                            double p_occlusion) {
    const SceneSpec& scene = dataset.scene(scene_id);
    Rng rng(derive_seed(seed, "occlusion", static_cast<std::uint64_t>(scene_id)));
    const std::vector<bool> keep0 = dropout_keep(rng, scene.objects.size(), p_occlusion);
    const std::vector<bool> keep1 = dropout_keep(rng, scene.objects.size(), p_occlusion);

    PairBatch batch;
    batch.scene_id = scene_id;
    for (std::size_t pos = 0; pos < scene.objects.size(); ++pos) {
        if (keep0[pos]) {
            batch.view0.push_back(dataset.patch(dataset.manifest_index(scene_id, static_cast<int>(pos), 0)));
        }
        if (keep1[pos]) {
            batch.view1.push_back(dataset.patch(dataset.manifest_index(scene_id, static_cast<int>(pos), 1)));
        }
    }
    return batch;
}

std::vector<PairBatch> make_sequence(const SceneSpec& scene, const GenConfig& config,
                                     int num_frames, std::uint64_t seed) {
    if (num_frames < 1) {
        throw ConfigError("sequence must have at least one frame");
    }
    std::vector<PairBatch> frames;
    frames.reserve(static_cast<std::size_t>(num_frames));
    for (int f = 0; f < num_frames; ++f) {
        const auto fi = static_cast<std::uint64_t>(f);
        Rng occ(derive_seed(seed, "frame-occlusion", fi));
        const std::vector<bool> keep0 = dropout_keep(occ, scene.objects.size(), config.p_occlusion);
        const std::vector<bool> keep1 = dropout_keep(occ, scene.objects.size(), config.p_occlusion);
        PairBatch batch;
        batch.scene_id = scene.scene_id;
        for (std::size_t pos = 0; pos < scene.objects.size(); ++pos) {
            for (int view = 0; view < 2; ++view) {
                if (view == 0 ? !keep0[pos] : !keep1[pos]) {
                    continue;
                }
                ViewParams vp = draw_view_params(
                    derive_seed(seed, "frame-view", fi, pos, static_cast<std::uint64_t>(view)), config);
                Patch patch = render_object(
                    scene.objects[pos], vp,
                    derive_seed(seed, "frame-render", fi, pos, static_cast<std::uint64_t>(view)), config);
                patch.view_index = view;
                (view == 0 ? batch.view0 : batch.view1).push_back(std::move(patch));
            }
        }
        frames.push_back(std::move(batch));
    }
    return frames;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::string bin;
    bin.reserve(dataset.pixels.size() * 4);
    for (float v : dataset.pixels) {
        append_f32(bin, v);
    }
    atomic_write_file(dir / "patches.bin", bin);

    std::string manifest;
    for (const ManifestRecord& rec : dataset.manifest) {
        ordered_json j;
        j["index"] = rec.index;
        j["offset_bytes"] = rec.offset_bytes;
        j["object_id"] = rec.object_id;
        j["scene_id"] = rec.scene_id;
        j["view"] = rec.view;
        j["category"] = rec.category;
        j["color"] = rec.color;
        j["binary_attrs"] = rec.binary_attrs;
        j["split"] = split_name(rec.split);
        manifest += j.dump();
        manifest += "\n";
    }
    atomic_write_file(dir / "manifest.jsonl", manifest);

    ordered_json meta;
    meta["config"] = ordered_json::parse(config_to_json(dataset.config));
    meta["seed"] = dataset.seed;
    const std::string cfg = config_to_json(dataset.config);
    meta["config_digest"] = hex64(fnv1a64(cfg.data(), cfg.size()));
    atomic_write_file(dir / "meta.json", meta.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    const std::string meta_text = read_file(dir / "meta.json");
    ordered_json meta;
    try {
        meta = ordered_json::parse(meta_text);
    } catch (const std::exception& e) {
        throw IoError(std::string("corrupt meta.json: ") + e.what());
    }
    ds.config = config_from_json(meta.at("config").dump());
    ds.seed = meta.at("seed").get<std::uint64_t>();

    const std::string bin = read_file(dir / "patches.bin");
    if (bin.size() % 4 != 0) {
        throw IoError("patches.bin length is not a multiple of 4");
    }
    ds.pixels.resize(bin.size() / 4);
    for (std::size_t i = 0; i < ds.pixels.size(); ++i) {
        ds.pixels[i] = read_f32(bin, i * 4);
    }

    const std::string manifest_text = read_file(dir / "manifest.jsonl");
    std::istringstream lines(manifest_text);
    std::string line;
    const int floats_per_patch = ds.patch_floats();
    while (std::getline(lines, line)) {
        if (line.empty()) {
            continue;
        }
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw IoError(std::string("corrupt manifest line: ") + e.what());
        }
        ManifestRecord rec;
        rec.index = j.at("index").get<int>();
        rec.offset_bytes = j.at("offset_bytes").get<std::int64_t>();
        rec.object_id = j.at("object_id").get<int>();
        rec.scene_id = j.at("scene_id").get<int>();
        rec.view = j.at("view").get<int>();
        rec.category = j.at("category").get<int>();
        rec.color = j.at("color").get<int>();
        rec.binary_attrs = j.at("binary_attrs").get<std::vector<std::uint8_t>>();
        rec.split = split_from_name(j.at("split").get<std::string>());
        if (rec.offset_bytes < 0 || rec.offset_bytes % (floats_per_patch * 4) != 0 ||
            static_cast<std::size_t>(rec.offset_bytes) + static_cast<std::size_t>(floats_per_patch) * 4 >
                bin.size()) {
            throw IoError("manifest record offset does not address a valid patch");
        }
        ds.manifest.push_back(std::move(rec));
    }

    // Rebuild scene structure from the manifest (base_scale and per-view
    // jitter are not needed once patches exist).
    std::map<int, std::map<int, ManifestRecord>> by_scene;  // scene -> object -> one record
    std::map<int, Split> scene_splits;
    for (const ManifestRecord& rec : ds.manifest) {
        auto& obj_map = by_scene[rec.scene_id];
        auto it = obj_map.find(rec.object_id);
        if (it == obj_map.end()) {
            obj_map.emplace(rec.object_id, rec);
        } else if (it->second.category != rec.category || it->second.color != rec.color ||
                   it->second.binary_attrs != rec.binary_attrs) {
            throw IoError("manifest labels inconsistent for object " + std::to_string(rec.object_id));
        }
        auto split_it = scene_splits.find(rec.scene_id);
        if (split_it == scene_splits.end()) {
            scene_splits.emplace(rec.scene_id, rec.split);
        } else if (split_it->second != rec.split) {
            throw IoError("scene assigned to multiple splits: " + std::to_string(rec.scene_id));
        }
    }
    int expected_scene = 0;
    for (const auto& [scene_id, objects] : by_scene) {
        if (scene_id != expected_scene++) {
            throw IoError("manifest scene ids are not contiguous from zero");
        }
        SceneSpec scene;
        scene.scene_id = scene_id;
        for (const auto& [object_id, rec] : objects) {
            ObjectSpec obj;
            obj.object_id = object_id;
            obj.category = rec.category;
            obj.color = rec.color;
            obj.binary_attrs = rec.binary_attrs;
            scene.objects.push_back(std::move(obj));
        }
        ds.scenes.push_back(std::move(scene));
        ds.scene_split.push_back(scene_splits.at(scene_id));
    }
    return ds;
}

}  // namespace crossview::scenegen
