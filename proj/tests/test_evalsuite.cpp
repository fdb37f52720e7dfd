#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "crossview/errors.hpp"
#include "crossview/evalsuite.hpp"
#include "crossview/io.hpp"
#include "crossview/rng.hpp"
#include "oracles.hpp"

using namespace crossview;
using namespace crossview::evalsuite;

namespace {

scenegen::Patch make_patch(std::vector<float> pixels, int object_id, int category, int color) {
    scenegen::Patch p;
    p.pixels = std::move(pixels);
    p.patch_size = 0;  // unused by the evaluation helpers
    p.object_id = object_id;
    p.category = category;
    p.color = color;
    p.binary_attrs = {1, 0};
    return p;
}

Eigen::MatrixXd random_matrix(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd m(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) {
            m(i, j) = rng.normal();
        }
    }
    return m;
}

LabeledEmbeddings labeled(Eigen::MatrixXd emb, std::vector<int> labels, int num_values) {
    LabeledEmbeddings l;
    l.embeddings = std::move(emb);
    l.labels = std::move(labels);
    l.num_values = num_values;
    return l;
}

gradnet::EmbeddingNet tiny_net(int input_dim, std::uint64_t seed) {
    gradnet::NetConfig nc;
    nc.dims = {input_dim, 16, 8};
    return gradnet::EmbeddingNet::init_random(nc, seed);
}

}  // namespace

TEST_CASE("patch_matrix lays out one patch per row") {
    std::vector<scenegen::Patch> patches;
    patches.push_back(make_patch({0.0f, 0.5f, 1.0f}, 1, 0, 0));
    patches.push_back(make_patch({0.25f, 0.75f, 0.125f}, 2, 0, 0));
    const Eigen::MatrixXd x = patch_matrix(patches);
    REQUIRE(x.rows() == 2);
    REQUIRE(x.cols() == 3);
    CHECK(x(0, 0) == 0.0);
    CHECK(x(0, 1) == 0.5);
    CHECK(x(0, 2) == 1.0);
    CHECK(x(1, 0) == 0.25);
    CHECK(x(1, 2) == 0.125);

    patches.push_back(make_patch({0.1f}, 3, 0, 0));
    CHECK_THROWS_AS(patch_matrix(patches), ShapeError);
    CHECK_THROWS_AS(patch_matrix({}), ShapeError);
}

TEST_CASE("attribute helpers resolve names and reject unknowns") {
    scenegen::Patch p = make_patch({0.0f}, 4, 7, 3);
    p.binary_attrs = {1, 0, 0, 1};
    CHECK(attribute_value(p, "category") == 7);
    CHECK(attribute_value(p, "color") == 3);
    CHECK(attribute_value(p, "attr0") == 1);
    CHECK(attribute_value(p, "attr1") == 0);
    CHECK(attribute_value(p, "attr3") == 1);
    CHECK_THROWS_AS(attribute_value(p, "attr4"), LookupError);
    CHECK_THROWS_AS(attribute_value(p, "attr"), LookupError);
    CHECK_THROWS_AS(attribute_value(p, "attrx"), LookupError);
    CHECK_THROWS_AS(attribute_value(p, "shape"), LookupError);

    scenegen::GenConfig c;
    CHECK(attribute_cardinality(c, "category") == c.num_categories);
    CHECK(attribute_cardinality(c, "color") == c.num_colors);
    CHECK(attribute_cardinality(c, "attr0") == 2);
    CHECK(attribute_cardinality(c, "attr3") == 2);
    CHECK_THROWS_AS(attribute_cardinality(c, "attr4"), LookupError);
    CHECK_THROWS_AS(attribute_cardinality(c, "attr-1"), LookupError);
    CHECK_THROWS_AS(attribute_cardinality(c, "object"), LookupError);

    const auto names = attribute_names(c);
    REQUIRE(names.size() == 2 + static_cast<std::size_t>(c.num_binary_attrs));
    CHECK(names[0] == "category");
    CHECK(names[1] == "color");
    CHECK(names[2] == "attr0");
    CHECK(names.back() == "attr3");
}

TEST_CASE("embed_split returns one labeled row per split patch") {
    scenegen::GenConfig c;
    c.train_scenes = 3;
    c.val_scenes = 1;
    c.test_scenes = 0;
    c.min_objects = 2;
    c.max_objects = 4;
    const scenegen::Dataset ds = scenegen::generate_dataset(c, 50);
    const gradnet::EmbeddingNet net = tiny_net(ds.patch_floats(), 1);

    const LabeledEmbeddings val = embed_split(net, ds, scenegen::Split::val, "category");
    std::size_t want_rows = 0;
    std::vector<int> want_labels;
    for (const scenegen::ManifestRecord& rec : ds.manifest) {
        if (rec.split == scenegen::Split::val) {
            ++want_rows;
            want_labels.push_back(rec.category);
        }
    }
    CHECK(val.embeddings.rows() == static_cast<Eigen::Index>(want_rows));
    CHECK(val.embeddings.cols() == 8);
    CHECK(val.labels == want_labels);
    CHECK(val.num_values == c.num_categories);

    // Chunked embedding equals a direct forward pass.
    std::vector<scenegen::Patch> patches;
    for (const scenegen::ManifestRecord& rec : ds.manifest) {
        if (rec.split == scenegen::Split::val) {
            patches.push_back(ds.patch(rec.index));
        }
    }
    const Eigen::MatrixXd direct = net.embed(patch_matrix(patches));
    CHECK((val.embeddings - direct).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(embed_split(net, ds, scenegen::Split::test, "category"), ConfigError);
    CHECK_THROWS_AS(embed_split(net, ds, scenegen::Split::val, "nope"), LookupError);
}

TEST_CASE("gallery keeps first appearances in view order") {
    const std::vector<float> px(12, 0.5f);
    scenegen::PairBatch f0;
    f0.view0 = {make_patch(px, 5, 0, 0), make_patch(px, 3, 0, 0)};
    f0.view1 = {make_patch(px, 3, 0, 0), make_patch(px, 7, 0, 0)};
    scenegen::PairBatch f1;
    f1.view0 = {make_patch(px, 9, 0, 0), make_patch(px, 5, 0, 0)};
    const ReferenceGallery g = build_gallery({f0, f1});
    CHECK(g.object_ids == std::vector<int>{5, 3, 7, 9});
    REQUIRE(g.patches.size() == 4);
    CHECK(g.patches[2].object_id == 7);
}

TEST_CASE("identification over the gallery's own frames is perfect") {
    scenegen::GenConfig c;
    c.p_occlusion = 0.0;
    const scenegen::SceneSpec scene = scenegen::make_scene_fixed_objects(c, 0, 5, 60);
    const auto frames = scenegen::make_sequence(scene, c, 3, 61);
    const gradnet::EmbeddingNet net = tiny_net(c.patch_size * c.patch_size * 3, 2);

    const ReferenceGallery own = build_gallery({frames[0]});
    scenegen::PairBatch exact;
    exact.view0 = own.patches;  // every detection is bitwise its gallery entry
    exact.view1 = own.patches;
    CHECK(identification_error(net, own, {exact}) == 0.0);

    // A one-object gallery labels everything with that object.
    ReferenceGallery single;
    single.object_ids = {scene.objects[0].object_id};
    single.patches = {frames[0].view0[0]};
    std::vector<scenegen::PairBatch> only_first;
    scenegen::PairBatch b;
    b.view0 = {frames[1].view0[0]};
    only_first.push_back(b);
    CHECK(identification_error(net, single, only_first) == 0.0);

    CHECK_THROWS_AS(identification_error(net, ReferenceGallery{}, frames), ConfigError);
    CHECK_THROWS_AS(identification_error(net, own, {}), ConfigError);
    const double err = identification_error(net, own, frames);
    CHECK(err >= 0.0);
    CHECK(err <= 1.0);
}

TEST_CASE("linear probe separates one-hot classes perfectly") {
    const int classes = 4;
    Eigen::MatrixXd emb = Eigen::MatrixXd::Zero(40, classes);
    std::vector<int> labels(40);
    for (int i = 0; i < 40; ++i) {
        labels[static_cast<std::size_t>(i)] = i % classes;
        emb(i, i % classes) = 1.0;
    }
    const LabeledEmbeddings set = labeled(emb, labels, classes);
    const ProbeResult r = linear_probe(set, set, set, "category");
    CHECK(r.error_rate == 0.0);
    CHECK(r.probe_kind == "linear");
    CHECK(r.attribute == "category");
    CHECK(std::abs(r.chance_rate - 0.75) < 1e-12);
}

TEST_CASE("linear probe rejects degenerate label sets") {
    const Eigen::MatrixXd emb = random_matrix(10, 4, 3);
    CHECK_THROWS_AS(linear_probe(labeled(emb, std::vector<int>(10, 0), 1),
                                 labeled(emb, std::vector<int>(10, 0), 1),
                                 labeled(emb, std::vector<int>(10, 0), 1), "category"),
                    ConfigError);
    CHECK_THROWS_AS(linear_probe(labeled(emb, std::vector<int>(10, 1), 3),
                                 labeled(emb, std::vector<int>(10, 1), 3),
                                 labeled(emb, std::vector<int>(10, 1), 3), "category"),
                    ConfigError);
}

TEST_CASE("linear probe on shuffled labels sits near chance") {
    Rng rng(70);
    const int n = 600;
    const int classes = 4;
    Eigen::MatrixXd emb = random_matrix(n, 8, 71);
    std::vector<int> labels(n);
    for (auto& l : labels) l = static_cast<int>(rng.below(classes));
    const LabeledEmbeddings train = labeled(emb.topRows(n / 3), {labels.begin(), labels.begin() + n / 3}, classes);
    const LabeledEmbeddings val =
        labeled(emb.middleRows(n / 3, n / 3), {labels.begin() + n / 3, labels.begin() + 2 * n / 3}, classes);
    const LabeledEmbeddings test =
        labeled(emb.bottomRows(n / 3), {labels.begin() + 2 * n / 3, labels.end()}, classes);
    const ProbeResult r = linear_probe(train, val, test, "category");
    CHECK(std::abs(r.error_rate - r.chance_rate) < 0.1);
}

TEST_CASE("nearest-neighbor probe is exact on its own reference set") {
    const Eigen::MatrixXd emb = random_matrix(30, 6, 80);
    std::vector<int> labels(30);
    for (int i = 0; i < 30; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
    const LabeledEmbeddings set = labeled(emb, labels, 3);
    const ProbeResult r = nn_probe(set, set, "color");
    CHECK(r.error_rate == 0.0);
    CHECK(r.probe_kind == "nearest_neighbor");
    CHECK(std::abs(r.chance_rate - (1.0 - 1.0 / 3.0)) < 1e-12);
}

TEST_CASE("nearest-neighbor probe resolves separated clusters") {
    Rng rng(90);
    const int per = 50;
    Eigen::MatrixXd train_emb(2 * per, 5);
    Eigen::MatrixXd eval_emb(2 * per, 5);
    std::vector<int> labels(2 * per);
    for (int i = 0; i < 2 * per; ++i) {
        const int cls = i < per ? 0 : 1;
        labels[static_cast<std::size_t>(i)] = cls;
        for (int j = 0; j < 5; ++j) {
            const double center = cls == 0 ? -10.0 : 10.0;
            train_emb(i, j) = center + rng.normal();
            eval_emb(i, j) = center + rng.normal();
        }
    }
    const ProbeResult r =
        nn_probe(labeled(train_emb, labels, 2), labeled(eval_emb, labels, 2), "attr0");
    CHECK(r.error_rate == 0.0);
}

TEST_CASE("nearest-neighbor probe is rotation invariant") {
    const Eigen::MatrixXd train_emb = random_matrix(80, 6, 100);
    const Eigen::MatrixXd eval_emb = random_matrix(60, 6, 101);
    Rng rng(102);
    std::vector<int> train_labels(80), eval_labels(60);
    for (auto& l : train_labels) l = static_cast<int>(rng.below(3));
    for (auto& l : eval_labels) l = static_cast<int>(rng.below(3));

    const ProbeResult base = nn_probe(labeled(train_emb, train_labels, 3),
                                      labeled(eval_emb, eval_labels, 3), "category");

    const Eigen::MatrixXd q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(6, 6, 103)).householderQ();
    const ProbeResult rotated = nn_probe(labeled(train_emb * q, train_labels, 3),
                                         labeled(eval_emb * q, eval_labels, 3), "category");
    CHECK(base.error_rate == rotated.error_rate);
}

TEST_CASE("nearest-neighbor probe on random balanced labels is near 50%") {
    Rng rng(110);
    const Eigen::MatrixXd train_emb = random_matrix(400, 8, 111);
    const Eigen::MatrixXd eval_emb = random_matrix(600, 8, 112);
    std::vector<int> train_labels(400), eval_labels(600);
    for (std::size_t i = 0; i < train_labels.size(); ++i) {
        train_labels[i] = static_cast<int>(i % 2);
    }
    for (auto& l : eval_labels) l = static_cast<int>(rng.below(2));
    const ProbeResult r = nn_probe(labeled(train_emb, train_labels, 2),
                                   labeled(eval_emb, eval_labels, 2), "attr1");
    CHECK(std::abs(r.error_rate - 0.5) < 0.05);
    CHECK(r.chance_rate == 0.5);

    CHECK_THROWS_AS(nn_probe(labeled(Eigen::MatrixXd(0, 4), {}, 2),
                             labeled(eval_emb, eval_labels, 2), "attr1"),
                    ConfigError);
}

TEST_CASE("correspondence on identical views is perfect") {
    scenegen::GenConfig c;
    c.p_occlusion = 0.0;
    const scenegen::SceneSpec scene = scenegen::make_scene_fixed_objects(c, 0, 4, 120);
    auto frames = scenegen::make_sequence(scene, c, 2, 121);
    for (auto& f : frames) {
        f.view1 = f.view0;  // bitwise-identical views
    }
    const gradnet::EmbeddingNet net = tiny_net(c.patch_size * c.patch_size * 3, 4);
    const CorrespondenceResult r = correspondence_eval(net, frames);
    CHECK(r.object_matching_error == 0.0);
    CHECK(r.attribute_error == 0.0);
    CHECK(r.num_anchors == 2 * 2 * 4);
}

TEST_CASE("correspondence separates object identity from attributes") {
    // view1 re-labels the same two appearances with swapped object ids, so
    // every mined match lands on the right appearance but the wrong object.
    const int n = 12;
    std::vector<float> px_a(n, 0.1f), px_b(n, 0.9f);
    scenegen::PairBatch batch;
    batch.view0 = {make_patch(px_a, 0, 2, 5), make_patch(px_b, 1, 3, 6)};
    batch.view1 = {make_patch(px_a, 1, 2, 5), make_patch(px_b, 0, 3, 6)};
    const gradnet::EmbeddingNet net = tiny_net(n, 5);
    const CorrespondenceResult r = correspondence_eval(net, {batch});
    CHECK(r.object_matching_error == 1.0);
    CHECK(r.attribute_error == 0.0);
    CHECK(r.num_anchors == 4);
}

TEST_CASE("correspondence skips empty views and validates") {
    scenegen::PairBatch empty0;
    empty0.view1 = {make_patch({0.5f, 0.5f}, 1, 0, 0)};
    const gradnet::EmbeddingNet net = tiny_net(2, 6);
    CHECK_THROWS_AS(correspondence_eval(net, {empty0}), ConfigError);
    CHECK_THROWS_AS(correspondence_eval(net, {}), ConfigError);
}

TEST_CASE("project_2d is an isometry on rank-2 data") {
    const Eigen::MatrixXd coords = random_matrix(20, 2, 130);
    const Eigen::MatrixXd q =
        Eigen::HouseholderQR<Eigen::MatrixXd>(random_matrix(6, 6, 131)).householderQ();
    const Eigen::MatrixXd basis = q.leftCols(2);
    Eigen::MatrixXd emb = coords * basis.transpose();
    emb.rowwise() += Eigen::RowVectorXd::Constant(6, 3.0);

    const Eigen::MatrixXd proj = project_2d(emb);
    REQUIRE(proj.rows() == 20);
    REQUIRE(proj.cols() == 2);
    for (int i = 0; i < 20; ++i) {
        for (int j = i + 1; j < 20; ++j) {
            const double want = (coords.row(i) - coords.row(j)).norm();
            const double got = (proj.row(i) - proj.row(j)).norm();
            CHECK(oracles::close(got, want, 1e-8, 1e-10));
        }
    }
}

TEST_CASE("project_2d captures the top-2 spectrum exactly") {
    const Eigen::MatrixXd emb = random_matrix(25, 7, 140);
    const Eigen::MatrixXd proj = project_2d(emb);
    const Eigen::MatrixXd centered = emb.rowwise() - emb.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
    const Eigen::VectorXd sv = svd.singularValues();
    double residual = 0.0;
    for (Eigen::Index k = 2; k < sv.size(); ++k) {
        residual += sv(k) * sv(k);
    }
    const double dropped = centered.squaredNorm() - proj.squaredNorm();
    CHECK(oracles::close(dropped, residual, 1e-8, 1e-8));
}

TEST_CASE("project_2d handles degenerate inputs") {
    const Eigen::MatrixXd same = Eigen::RowVectorXd::Constant(5, 1.25).replicate(4, 1);
    const Eigen::MatrixXd proj = project_2d(same);
    CHECK(proj.cwiseAbs().maxCoeff() == 0.0);

    // Rank-1 data keeps the second axis at zero.
    Eigen::MatrixXd line(5, 3);
    for (int i = 0; i < 5; ++i) {
        line.row(i) = Eigen::RowVector3d(1.0, 2.0, -1.0) * static_cast<double>(i);
    }
    const Eigen::MatrixXd lp = project_2d(line);
    CHECK(lp.col(1).cwiseAbs().maxCoeff() == 0.0);
    CHECK(lp.col(0).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(project_2d(random_matrix(2, 4, 141)), ShapeError);
}

TEST_CASE("project_2d has a deterministic sign convention") {
    const Eigen::MatrixXd emb = random_matrix(15, 5, 150);
    const Eigen::MatrixXd a = project_2d(emb);
    const Eigen::MatrixXd b = project_2d(emb);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    const Eigen::MatrixXd neg = project_2d(-emb);
    CHECK((a + neg).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("report records serialize to stable JSON and CSV") {
    ReportRecord r;
    r.protocol = "probe";
    r.mode = "unsup";
    r.attribute = "color";
    r.error = 0.25;
    r.chance = 0.875;
    r.config_digest = "00c0ffee00c0ffee";
    r.seed = 7;
    CHECK(report_json_line(r) ==
          "{\"protocol\":\"probe\",\"mode\":\"unsup\",\"attribute\":\"color\",\"error\":0.25,"
          "\"chance\":0.875,\"config_digest\":\"00c0ffee00c0ffee\",\"seed\":7}\n");
    CHECK(report_csv_row(r) == "probe,unsup,color,0.25,0.875");

    ReportRecord bare;
    bare.protocol = "online";
    bare.mode = "frozen";
    bare.error = 0.5;
    bare.config_digest = "beef";
    bare.seed = 1;
    CHECK(report_json_line(bare) ==
          "{\"protocol\":\"online\",\"mode\":\"frozen\",\"error\":0.5,"
          "\"config_digest\":\"beef\",\"seed\":1}\n");
    CHECK(report_csv_row(bare) == "online,frozen,,0.5,");
    CHECK(report_csv_header() == "protocol,mode,attribute,error,chance");
}

TEST_CASE("append_report accumulates lines") {
    const auto dir = std::filesystem::temp_directory_path() / "crossview_report_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "report.jsonl";
    std::filesystem::remove(path);

    ReportRecord r;
    r.protocol = "probe";
    r.mode = "sup";
    r.attribute = "category";
    r.error = 0.125;
    r.config_digest = "d";
    r.seed = 2;
    append_report(path, r);
    const std::string first_line = report_json_line(r);
    r.attribute = "color";
    append_report(path, r);
    CHECK(read_file(path) == first_line + report_json_line(r));
    std::filesystem::remove_all(dir);
}
