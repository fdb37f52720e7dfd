#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/evalsuite.hpp"
#include "crossview/gradnet.hpp"
#include "crossview/io.hpp"
#include "crossview/objective.hpp"
#include "crossview/rng.hpp"
#include "crossview/scenegen.hpp"
#include "crossview/trainer.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;
using namespace crossview;

namespace {

std::string digest_of(const ordered_json& resolved) {
    const std::string text = resolved.dump();
    return hex64(fnv1a64(text.data(), text.size()));
}

void ensure_dir(const fs::path& dir) { fs::create_directories(dir); }

// Appends a record to report.jsonl and report.csv under dir.
void emit_report(const fs::path& dir, const evalsuite::ReportRecord& rec) {
    ensure_dir(dir);
    evalsuite::append_report(dir / "report.jsonl", rec);
    const fs::path csv = dir / "report.csv";
    std::string text;
    if (fs::exists(csv)) {
        text = read_file(csv);
    } else {
        text = evalsuite::report_csv_header() + "\n";
    }
    text += evalsuite::report_csv_row(rec) + "\n";
    atomic_write_file(csv, text);
}

struct GenArgs {
    std::string out;
    std::string config_path;
    std::uint64_t seed = 0;
    int scenes = -1;
    bool force = false;
};

int run_gen(const GenArgs& a) {
    scenegen::GenConfig config;
    if (!a.config_path.empty()) {
        config = scenegen::config_from_json(read_file(a.config_path));
    }
    if (a.scenes >= 0) {
        if (a.scenes < 1) {
            throw ConfigError("--scenes must be >= 1");
        }
        // 80-10-10 split of the requested total.
        const int val = static_cast<int>(std::llround(0.1 * a.scenes));
        const int test = val;
        config.train_scenes = a.scenes - val - test;
        config.val_scenes = val;
        config.test_scenes = test;
    }
    config.validate();

    const fs::path out(a.out);
    if (fs::exists(out) && !fs::is_empty(out) && !a.force) {
        throw IoError("output directory is not empty (use --force): " + out.string());
    }
    ensure_dir(out);
    const scenegen::Dataset ds = scenegen::generate_dataset(config, a.seed);
    scenegen::save_dataset(ds, out);
    std::cout << "wrote " << ds.manifest.size() << " patches over " << ds.scenes.size()
              << " scenes to " << out.string() << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out;
    std::string mode = "unsup";
    std::string optimizer = "adam";
    std::string warmstart;
    int steps = 200;
    int pairs_per_step = 4;
    int embed_dim = 16;
    double lr = 1e-3;
    std::uint64_t seed = 0;
    bool no_norm = false;
};

gradnet::NetConfig net_config_for(const scenegen::Dataset& ds, int embed_dim, bool no_norm) {
    gradnet::NetConfig nc;
    nc.dims = {ds.patch_floats(), 256, 64, embed_dim};
    nc.output_norm = !no_norm;
    return nc;
}

int run_train(const TrainArgs& a) {
    const scenegen::Dataset ds = scenegen::load_dataset(a.data);
    const gradnet::NetConfig nc = net_config_for(ds, a.embed_dim, a.no_norm);
    gradnet::EmbeddingNet net =
        a.warmstart.empty() ? gradnet::EmbeddingNet::init_random(nc, a.seed)
                            : gradnet::EmbeddingNet::init_warmstart(nc, a.warmstart);

    trainer::TrainConfig tc;
    tc.mode = trainer::mode_from_name(a.mode);
    tc.steps = a.steps;
    tc.pairs_per_step = a.pairs_per_step;
    tc.learning_rate = a.lr;
    tc.optimizer = trainer::optimizer_from_name(a.optimizer);
    tc.seed = a.seed;

    const trainer::TrainTrace trace = trainer::train(ds, net, tc);

    ordered_json resolved;
    resolved["command"] = "train";
    resolved["mode"] = a.mode;
    resolved["steps"] = a.steps;
    resolved["pairs_per_step"] = a.pairs_per_step;
    resolved["lr"] = a.lr;
    resolved["optimizer"] = a.optimizer;
    resolved["embed_dim"] = a.embed_dim;
    resolved["output_norm"] = !a.no_norm;
    resolved["warmstart"] = a.warmstart;
    resolved["data"] = a.data;
    resolved["seed"] = a.seed;

    const fs::path out(a.out);
    ensure_dir(out);
    net.save(out / "model.bin");
    atomic_write_file(out / "trace.csv", trainer::trace_csv(trace));
    ordered_json run = resolved;
    run["config_digest"] = digest_of(resolved);
    run["param_checksum"] = hex64(trace.final_checksum);
    atomic_write_file(out / "run.json", run.dump(2) + "\n");
    std::cout << "trained " << a.steps << " steps, final loss "
              << format_double(trace.losses.back()) << "\n";
    return 0;
}

struct OnlineArgs {
    std::string out;
    std::string mode = "unsup";
    int frames = 300;
    int objects = 20;
    int steps = 120;
    int pairs_per_step = 4;
    int embed_dim = 16;
    double lr = 1e-3;
    double eval_suffix = 0.2;
    std::vector<double> prefixes;
    std::uint64_t seed = 0;
    bool baseline = true;
};

int run_online_cmd(const OnlineArgs& a) {
    scenegen::GenConfig gc;
    gc.validate();
    if (a.objects < 2 || a.objects > 20) {
        throw ConfigError("--objects must be in [2, 20]");
    }
    if (a.frames < 5) {
        throw ConfigError("--frames must be >= 5");
    }
    const scenegen::SceneSpec scene = scenegen::make_scene_fixed_objects(
        gc, 0, a.objects, derive_seed(a.seed, "online-scene"));
    const std::vector<scenegen::PairBatch> sequence =
        scenegen::make_sequence(scene, gc, a.frames, derive_seed(a.seed, "online-seq"));

    gradnet::NetConfig nc;
    nc.dims = {gc.patch_size * gc.patch_size * 3, 256, 64, a.embed_dim};
    const gradnet::EmbeddingNet net = gradnet::EmbeddingNet::init_random(nc, a.seed);

    trainer::TrainConfig tc;
    tc.mode = trainer::mode_from_name(a.mode);
    if (tc.mode == trainer::Mode::frozen) {
        throw ConfigError("online training mode must be unsup or sup");
    }
    tc.steps = a.steps;
    tc.pairs_per_step = a.pairs_per_step;
    tc.learning_rate = a.lr;
    tc.seed = a.seed;

    trainer::OnlineProtocol protocol;
    if (!a.prefixes.empty()) {
        protocol.prefix_fractions = a.prefixes;
    }
    protocol.eval_suffix_fraction = a.eval_suffix;

    const trainer::OnlineResult result = trainer::run_online(sequence, net, tc, protocol);

    ordered_json resolved;
    resolved["command"] = "online";
    resolved["mode"] = a.mode;
    resolved["frames"] = a.frames;
    resolved["objects"] = a.objects;
    resolved["steps"] = a.steps;
    resolved["pairs_per_step"] = a.pairs_per_step;
    resolved["lr"] = a.lr;
    resolved["embed_dim"] = a.embed_dim;
    resolved["prefixes"] = protocol.prefix_fractions;
    resolved["eval_suffix"] = a.eval_suffix;
    resolved["seed"] = a.seed;
    const std::string digest = digest_of(resolved);

    const fs::path out(a.out);
    ensure_dir(out);
    std::string csv = "prefix_fraction,mode,error\n";
    for (const trainer::OnlinePrefixResult& pr : result.prefixes) {
        csv += format_double(pr.fraction) + "," + a.mode + "," + format_double(pr.error) + "\n";
        evalsuite::ReportRecord rec;
        rec.protocol = "online";
        rec.mode = a.mode;
        rec.attribute = "prefix_" + format_double(pr.fraction);
        rec.error = pr.error;
        rec.config_digest = digest;
        rec.seed = a.seed;
        evalsuite::append_report(out / "report.jsonl", rec);
        if (a.baseline) {
            csv += format_double(pr.fraction) + ",frozen," + format_double(result.frozen_error) +
                   "\n";
        }
    }
    if (a.baseline) {
        evalsuite::ReportRecord rec;
        rec.protocol = "online";
        rec.mode = "frozen";
        rec.error = result.frozen_error;
        rec.config_digest = digest;
        rec.seed = a.seed;
        evalsuite::append_report(out / "report.jsonl", rec);
    }
    atomic_write_file(out / "online.csv", csv);
    std::cout << "online final-prefix error " << format_double(result.prefixes.back().error)
              << " frozen " << format_double(result.frozen_error) << "\n";
    return 0;
}

struct ProbeArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string attribute = "category";
    std::string probe = "nn";
    std::string mode = "unsup";
    std::uint64_t seed = 0;
    bool shuffle_labels = false;
};

void shuffle_labels_inplace(std::vector<int>& labels, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = labels.size(); i > 1; --i) {
        std::swap(labels[i - 1], labels[rng.below(i)]);
    }
}

int run_probe(const ProbeArgs& a) {
    if (a.probe != "linear" && a.probe != "nn") {
        throw ConfigError("--probe must be linear or nn");
    }
    const scenegen::Dataset ds = scenegen::load_dataset(a.data);
    const gradnet::EmbeddingNet net = gradnet::EmbeddingNet::load(a.checkpoint);

    evalsuite::LabeledEmbeddings train =
        evalsuite::embed_split(net, ds, scenegen::Split::train, a.attribute);
    evalsuite::LabeledEmbeddings val =
        evalsuite::embed_split(net, ds, scenegen::Split::val, a.attribute);
    evalsuite::LabeledEmbeddings test =
        evalsuite::embed_split(net, ds, scenegen::Split::test, a.attribute);
    if (a.shuffle_labels) {
        shuffle_labels_inplace(train.labels, derive_seed(a.seed, "shuffle-train"));
        shuffle_labels_inplace(val.labels, derive_seed(a.seed, "shuffle-val"));
        shuffle_labels_inplace(test.labels, derive_seed(a.seed, "shuffle-test"));
    }

    const evalsuite::ProbeResult pr = a.probe == "linear"
                                          ? evalsuite::linear_probe(train, val, test, a.attribute)
                                          : evalsuite::nn_probe(train, test, a.attribute);

    ordered_json resolved;
    resolved["command"] = "probe";
    resolved["probe"] = a.probe;
    resolved["attribute"] = a.attribute;
    resolved["mode"] = a.mode;
    resolved["checkpoint"] = a.checkpoint;
    resolved["data"] = a.data;
    resolved["shuffle_labels"] = a.shuffle_labels;
    resolved["seed"] = a.seed;

    evalsuite::ReportRecord rec;
    rec.protocol = "probe_" + a.probe;
    rec.mode = a.mode;
    rec.attribute = a.attribute;
    rec.error = pr.error_rate;
    rec.chance = pr.chance_rate;
    rec.config_digest = digest_of(resolved);
    rec.seed = a.seed;
    emit_report(a.out, rec);
    std::cout << evalsuite::report_csv_row(rec) << "\n";
    return 0;
}

struct MatchArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string mode = "unsup";
    std::uint64_t seed = 0;
};

int run_match(const MatchArgs& a) {
    const scenegen::Dataset ds = scenegen::load_dataset(a.data);
    const gradnet::EmbeddingNet net = gradnet::EmbeddingNet::load(a.checkpoint);

    std::vector<scenegen::PairBatch> batches;
    for (int scene_id : ds.split_scene_ids(scenegen::Split::test)) {
        batches.push_back(scenegen::sample_frame_pair(
            ds, scene_id, derive_seed(a.seed, "match", static_cast<std::uint64_t>(scene_id))));
    }
    const evalsuite::CorrespondenceResult cr = evalsuite::correspondence_eval(net, batches);

    ordered_json resolved;
    resolved["command"] = "match";
    resolved["mode"] = a.mode;
    resolved["checkpoint"] = a.checkpoint;
    resolved["data"] = a.data;
    resolved["seed"] = a.seed;
    const std::string digest = digest_of(resolved);

    evalsuite::ReportRecord obj;
    obj.protocol = "correspondence";
    obj.mode = a.mode;
    obj.attribute = "object_match";
    obj.error = cr.object_matching_error;
    obj.config_digest = digest;
    obj.seed = a.seed;
    emit_report(a.out, obj);

    evalsuite::ReportRecord attr = obj;
    attr.attribute = "attribute_match";
    attr.error = cr.attribute_error;
    emit_report(a.out, attr);

    std::cout << "correspondence object_matching_error " << format_double(cr.object_matching_error)
              << " attribute_error " << format_double(cr.attribute_error) << "\n";
    return 0;
}

struct ProjectArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::string split = "test";
};

int run_project(const ProjectArgs& a) {
    const scenegen::Dataset ds = scenegen::load_dataset(a.data);
    const gradnet::EmbeddingNet net = gradnet::EmbeddingNet::load(a.checkpoint);
    const scenegen::Split split = scenegen::split_from_name(a.split);

    std::vector<scenegen::Patch> patches;
    for (const scenegen::ManifestRecord& rec : ds.manifest) {
        if (rec.split == split) {
            patches.push_back(ds.patch(rec.index));
        }
    }
    if (patches.size() < 3) {
        throw ConfigError("projection needs at least 3 patches in the split");
    }
    const Eigen::MatrixXd emb = net.embed(evalsuite::patch_matrix(patches));
    const Eigen::MatrixXd xy = evalsuite::project_2d(emb);

    std::string csv = "x,y,object_id,category,color\n";
    for (Eigen::Index i = 0; i < xy.rows(); ++i) {
        const scenegen::Patch& p = patches[static_cast<std::size_t>(i)];
        csv += format_double(xy(i, 0)) + "," + format_double(xy(i, 1)) + "," +
               std::to_string(p.object_id) + "," + std::to_string(p.category) + "," +
               std::to_string(p.color) + "\n";
    }
    ensure_dir(a.out);
    atomic_write_file(fs::path(a.out) / "projection.csv", csv);
    std::cout << "wrote " << xy.rows() << " projected points\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-view object embedding toolkit"};
    app.require_subcommand(1);

    GenArgs gen;
    CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();
    cmd_gen->add_option("--seed", gen.seed, "root seed");
    cmd_gen->add_option("--scenes", gen.scenes, "total scene count (80-10-10 split)");
    cmd_gen->add_option("--config", gen.config_path, "generation config JSON file");
    cmd_gen->add_flag("--force", gen.force, "overwrite a non-empty output directory");

    TrainArgs train;
    CLI::App* cmd_train = app.add_subcommand("train", "train an embedding net on a dataset");
    cmd_train->add_option("--data", train.data, "dataset directory")->required();
    cmd_train->add_option("--out", train.out, "output directory")->required();
    cmd_train->add_option("--mode", train.mode, "unsup | sup | frozen");
    cmd_train->add_option("--steps", train.steps, "optimizer steps");
    cmd_train->add_option("--lr", train.lr, "learning rate");
    cmd_train->add_option("--embed-dim", train.embed_dim, "embedding size");
    cmd_train->add_option("--pairs-per-step", train.pairs_per_step, "scene pairs per step");
    cmd_train->add_option("--optimizer", train.optimizer, "adam | sgd_momentum");
    cmd_train->add_option("--warmstart", train.warmstart, "checkpoint to initialize from");
    cmd_train->add_option("--seed", train.seed, "root seed");
    cmd_train->add_flag("--no-norm", train.no_norm, "disable output normalization");

    OnlineArgs online;
    CLI::App* cmd_online = app.add_subcommand("online", "prefix-training identification protocol");
    cmd_online->add_option("--out", online.out, "output directory")->required();
    cmd_online->add_option("--frames", online.frames, "sequence length");
    cmd_online->add_option("--objects", online.objects, "objects in the scene");
    cmd_online->add_option("--steps", online.steps, "steps per prefix");
    cmd_online->add_option("--lr", online.lr, "learning rate");
    cmd_online->add_option("--embed-dim", online.embed_dim, "embedding size");
    cmd_online->add_option("--pairs-per-step", online.pairs_per_step, "frame pairs per step");
    cmd_online->add_option("--mode", online.mode, "unsup | sup");
    cmd_online->add_option("--prefixes", online.prefixes, "training prefix fractions")
        ->delimiter(',');
    cmd_online->add_option("--eval-suffix", online.eval_suffix, "evaluation suffix fraction");
    cmd_online->add_option("--seed", online.seed, "root seed");
    cmd_online->add_flag("--baseline,!--no-baseline", online.baseline,
                         "include frozen baseline rows");

    ProbeArgs probe;
    CLI::App* cmd_probe = app.add_subcommand("probe", "attribute probe on frozen embeddings");
    cmd_probe->add_option("--checkpoint", probe.checkpoint, "model file")->required();
    cmd_probe->add_option("--data", probe.data, "dataset directory")->required();
    cmd_probe->add_option("--out", probe.out, "report directory")->required();
    cmd_probe->add_option("--attribute", probe.attribute, "category | color | attrK");
    cmd_probe->add_option("--probe", probe.probe, "linear | nn");
    cmd_probe->add_option("--mode", probe.mode, "mode label for the report");
    cmd_probe->add_option("--seed", probe.seed, "root seed");
    cmd_probe->add_flag("--shuffle-labels", probe.shuffle_labels,
                        "shuffle labels for chance calibration");

    MatchArgs match;
    CLI::App* cmd_match = app.add_subcommand("match", "view-to-view correspondence evaluation");
    cmd_match->add_option("--checkpoint", match.checkpoint, "model file")->required();
    cmd_match->add_option("--data", match.data, "dataset directory")->required();
    cmd_match->add_option("--out", match.out, "report directory")->required();
    cmd_match->add_option("--mode", match.mode, "mode label for the report");
    cmd_match->add_option("--seed", match.seed, "root seed");

    ProjectArgs project;
    CLI::App* cmd_project = app.add_subcommand("project", "2-D projection export");
    cmd_project->add_option("--checkpoint", project.checkpoint, "model file")->required();
    cmd_project->add_option("--data", project.data, "dataset directory")->required();
    cmd_project->add_option("--out", project.out, "output directory")->required();
    cmd_project->add_option("--split", project.split, "train | val | test");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (cmd_gen->parsed()) return run_gen(gen);
        if (cmd_train->parsed()) return run_train(train);
        if (cmd_online->parsed()) return run_online_cmd(online);
        if (cmd_probe->parsed()) return run_probe(probe);
        if (cmd_match->parsed()) return run_match(match);
        if (cmd_project->parsed()) return run_project(project);
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 5;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 4;
    } catch (const std::runtime_error& e) {
        // ConfigError, ShapeError, LookupError, StateError
        std::cerr << "validation error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
