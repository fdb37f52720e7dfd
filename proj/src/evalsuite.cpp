#include "crossview/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <nlohmann/json.hpp>

#include "crossview/errors.hpp"
#include "crossview/io.hpp"
#include "crossview/objective.hpp"

namespace crossview::evalsuite {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kProbeSteps = 2000;
constexpr double kProbeLearningRates[] = {1e-1, 1e-2, 1e-3};
constexpr int kEmbedChunk = 512;

Eigen::MatrixXd embed_chunked(const gradnet::EmbeddingNet& net, const Eigen::MatrixXd& rows) {
    Eigen::MatrixXd out(rows.rows(), net.config().dims.back());
    for (Eigen::Index start = 0; start < rows.rows(); start += kEmbedChunk) {
        const Eigen::Index count = std::min<Eigen::Index>(kEmbedChunk, rows.rows() - start);
        out.middleRows(start, count) = net.embed(rows.middleRows(start, count));
    }
    return out;
}

// Argmin by squared Euclidean distance, ties to the lowest index.
int nearest_row(const Eigen::MatrixXd& gallery, const Eigen::VectorXd& query) {
    int best = 0;
    double best_d = (gallery.row(0).transpose() - query).squaredNorm();
    for (Eigen::Index g = 1; g < gallery.rows(); ++g) {
        const double d = (gallery.row(g).transpose() - query).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(g);
        }
    }
    return best;
}

int argmax_lowest(const Eigen::RowVectorXd& row) {
    int best = 0;
    for (Eigen::Index c = 1; c < row.size(); ++c) {
        if (row(c) > row(best)) {
            best = static_cast<int>(c);
        }
    }
    return best;
}

double multiclass_error(const Eigen::MatrixXd& logits, const std::vector<int>& labels) {
    int wrong = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        if (argmax_lowest(logits.row(i)) != labels[static_cast<std::size_t>(i)]) {
            ++wrong;
        }
    }
    return static_cast<double>(wrong) / static_cast<double>(logits.rows());
}

}  // namespace

Eigen::MatrixXd patch_matrix(const std::vector<scenegen::Patch>& patches) {
    if (patches.empty()) {
        throw ShapeError("cannot build a matrix from zero patches");
    }
    const std::size_t width = patches.front().pixels.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(patches.size()), static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < patches.size(); ++i) {
        if (patches[i].pixels.size() != width) {
            throw ShapeError("patches have inconsistent sizes");
        }
        for (std::size_t j = 0; j < width; ++j) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<double>(patches[i].pixels[j]);
        }
    }
    return x;
}

namespace {

// "attrK" -> K, or -1 when the name is not of that form.
int binary_attr_index(const std::string& attribute) {
    if (attribute.size() <= 4 || attribute.rfind("attr", 0) != 0) {
        return -1;
    }
    int k = 0;
    for (std::size_t i = 4; i < attribute.size(); ++i) {
        const char c = attribute[i];
        if (c < '0' || c > '9' || k > 99) {
            return -1;
        }
        k = k * 10 + (c - '0');
    }
    return k;
}

}  // namespace

int attribute_value(const scenegen::Patch& patch, const std::string& attribute) {
    if (attribute == "category") return patch.category;
    if (attribute == "color") return patch.color;
    const int k = binary_attr_index(attribute);
    if (k >= 0 && k < static_cast<int>(patch.binary_attrs.size())) {
        return patch.binary_attrs[static_cast<std::size_t>(k)];
    }
    throw LookupError("unknown attribute: " + attribute);
}

int attribute_cardinality(const scenegen::GenConfig& config, const std::string& attribute) {
    if (attribute == "category") return config.num_categories;
    if (attribute == "color") return config.num_colors;
    const int k = binary_attr_index(attribute);
    if (k >= 0 && k < config.num_binary_attrs) {
        return 2;
    }
    throw LookupError("unknown attribute: " + attribute);
}

std::vector<std::string> attribute_names(const scenegen::GenConfig& config) {
    std::vector<std::string> names{"category", "color"};
    for (int b = 0; b < config.num_binary_attrs; ++b) {
        names.push_back("attr" + std::to_string(b));
    }
    return names;
}

LabeledEmbeddings embed_split(const gradnet::EmbeddingNet& net, const scenegen::Dataset& dataset,
                              scenegen::Split split, const std::string& attribute) {
    std::vector<scenegen::Patch> patches;
    for (const scenegen::ManifestRecord& rec : dataset.manifest) {
        if (rec.split == split) {
            patches.push_back(dataset.patch(rec.index));
        }
    }
    if (patches.empty()) {
        throw ConfigError("dataset split is empty");
    }
    LabeledEmbeddings out;
    out.embeddings = embed_chunked(net, patch_matrix(patches));
    out.labels.reserve(patches.size());
    for (const scenegen::Patch& p : patches) {
        out.labels.push_back(attribute_value(p, attribute));
    }
    out.num_values = attribute_cardinality(dataset.config, attribute);
    return out;
}

ReferenceGallery build_gallery(const std::vector<scenegen::PairBatch>& frames) {
    ReferenceGallery g;
    std::set<int> seen;
    for (const scenegen::PairBatch& frame : frames) {
        for (const std::vector<scenegen::Patch>* view : {&frame.view0, &frame.view1}) {
            for (const scenegen::Patch& p : *view) {
                if (seen.insert(p.object_id).second) {
                    g.object_ids.push_back(p.object_id);
                    g.patches.push_back(p);
                }
            }
        }
    }
    return g;
}

double identification_error(const gradnet::EmbeddingNet& net, const ReferenceGallery& gallery,
                            const std::vector<scenegen::PairBatch>& eval_frames) {
    if (gallery.object_ids.empty()) {
        throw ConfigError("reference gallery is empty");
    }
    const Eigen::MatrixXd gallery_emb = embed_chunked(net, patch_matrix(gallery.patches));
    long detections = 0;
    long wrong = 0;
    for (const scenegen::PairBatch& frame : eval_frames) {
        for (const std::vector<scenegen::Patch>* view : {&frame.view0, &frame.view1}) {
            if (view->empty()) {
                continue;
            }
            const Eigen::MatrixXd emb = embed_chunked(net, patch_matrix(*view));
            for (Eigen::Index i = 0; i < emb.rows(); ++i) {
                const int assigned =
                    gallery.object_ids[static_cast<std::size_t>(nearest_row(gallery_emb, emb.row(i)))];
                ++detections;
                if (assigned != (*view)[static_cast<std::size_t>(i)].object_id) {
                    ++wrong;
                }
            }
        }
    }
    if (detections == 0) {
        throw ConfigError("no detections in evaluation frames");
    }
    return static_cast<double>(wrong) / static_cast<double>(detections);
}

ProbeResult linear_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& val,
                         const LabeledEmbeddings& test, const std::string& attribute) {
    const int classes = train.num_values;
    if (classes < 2) {
        throw ConfigError("probe needs at least two classes");
    }
    std::set<int> distinct(train.labels.begin(), train.labels.end());
    if (distinct.size() < 2) {
        throw ConfigError("degenerate probe: training labels are single-class");
    }
    const Eigen::Index n = train.embeddings.rows();
    const Eigen::Index k = train.embeddings.cols();

    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        onehot(i, train.labels[static_cast<std::size_t>(i)]) = 1.0;
    }

    double best_val = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best_w;
    Eigen::RowVectorXd best_b;
    for (const double lr : kProbeLearningRates) {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(k, classes);
        Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(classes);
        for (int step = 0; step < kProbeSteps; ++step) {
            Eigen::MatrixXd logits = (train.embeddings * w).rowwise() + b;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double row_max = logits.row(i).maxCoeff();
                Eigen::ArrayXd e = (logits.row(i).array() - row_max).exp();
                logits.row(i) = (e / e.sum()).matrix().transpose();
            }
            const Eigen::MatrixXd g = (logits - onehot) / static_cast<double>(n);
            w -= lr * (train.embeddings.transpose() * g);
            b -= lr * g.colwise().sum();
        }
        const double val_err =
            multiclass_error((val.embeddings * w).rowwise() + b, val.labels);
        if (val_err < best_val) {
            best_val = val_err;
            best_w = w;
            best_b = b;
        }
    }

    ProbeResult r;
    r.attribute = attribute;
    r.probe_kind = "linear";
    r.error_rate = multiclass_error((test.embeddings * best_w).rowwise() + best_b, test.labels);
    r.chance_rate = 1.0 - 1.0 / static_cast<double>(classes);
    return r;
}

ProbeResult nn_probe(const LabeledEmbeddings& train, const LabeledEmbeddings& eval,
                     const std::string& attribute) {
    if (train.embeddings.rows() < 1) {
        throw ConfigError("nearest-neighbor probe needs a non-empty reference set");
    }
    long wrong = 0;
    const Eigen::VectorXd train_sq = train.embeddings.rowwise().squaredNorm();
    constexpr Eigen::Index block = 256;
    for (Eigen::Index start = 0; start < eval.embeddings.rows(); start += block) {
        const Eigen::Index count = std::min(block, eval.embeddings.rows() - start);
        const Eigen::MatrixXd chunk = eval.embeddings.middleRows(start, count);
        // d^2 = |e|^2 + |t|^2 - 2 e.t; |e|^2 constant per row, omitted.
        Eigen::MatrixXd scores = (-2.0 * (chunk * train.embeddings.transpose())).rowwise() +
                                 train_sq.transpose();
        for (Eigen::Index i = 0; i < count; ++i) {
            Eigen::Index best = 0;
            for (Eigen::Index t = 1; t < scores.cols(); ++t) {
                if (scores(i, t) < scores(i, best)) {
                    best = t;
                }
            }
            if (train.labels[static_cast<std::size_t>(best)] !=
                eval.labels[static_cast<std::size_t>(start + i)]) {
                ++wrong;
            }
        }
    }
    ProbeResult r;
    r.attribute = attribute;
    r.probe_kind = "nearest_neighbor";
    r.error_rate = static_cast<double>(wrong) / static_cast<double>(eval.embeddings.rows());
    r.chance_rate = 1.0 - 1.0 / static_cast<double>(train.num_values);
    return r;
}

CorrespondenceResult correspondence_eval(const gradnet::EmbeddingNet& net,
                                         const std::vector<scenegen::PairBatch>& batches) {
    long anchors = 0;
    long obj_wrong = 0;
    long attr_wrong = 0;
    for (const scenegen::PairBatch& batch : batches) {
        if (batch.view0.empty() || batch.view1.empty()) {
            continue;
        }
        const Eigen::MatrixXd f0 = embed_chunked(net, patch_matrix(batch.view0));
        const Eigen::MatrixXd f1 = embed_chunked(net, patch_matrix(batch.view1));
        const objective::DistanceMatrix d = objective::distance_matrix(f0, f1);
        objective::DistanceMatrix dt;
        dt.entries = d.entries.transpose();

        const objective::MiningResult m01 = objective::mine_positives(d);
        for (std::size_t a = 0; a < m01.anchor_index.size(); ++a) {
            const scenegen::Patch& anchor = batch.view0[static_cast<std::size_t>(m01.anchor_index[a])];
            const scenegen::Patch& match = batch.view1[static_cast<std::size_t>(m01.positive_index[a])];
            ++anchors;
            obj_wrong += anchor.object_id != match.object_id ? 1 : 0;
            attr_wrong += (anchor.category != match.category || anchor.color != match.color) ? 1 : 0;
        }
        const objective::MiningResult m10 = objective::mine_positives(dt);
        for (std::size_t a = 0; a < m10.anchor_index.size(); ++a) {
            const scenegen::Patch& anchor = batch.view1[static_cast<std::size_t>(m10.anchor_index[a])];
            const scenegen::Patch& match = batch.view0[static_cast<std::size_t>(m10.positive_index[a])];
            ++anchors;
            obj_wrong += anchor.object_id != match.object_id ? 1 : 0;
            attr_wrong += (anchor.category != match.category || anchor.color != match.color) ? 1 : 0;
        }
    }
    if (anchors == 0) {
        throw ConfigError("correspondence evaluation saw no usable pair batches");
    }
    CorrespondenceResult r;
    r.num_anchors = static_cast<int>(anchors);
    r.object_matching_error = static_cast<double>(obj_wrong) / static_cast<double>(anchors);
    r.attribute_error = static_cast<double>(attr_wrong) / static_cast<double>(anchors);
    return r;
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& embeddings) {
    if (embeddings.rows() < 3) {
        throw ShapeError("2-D projection needs at least 3 rows");
    }
    const Eigen::RowVectorXd mean = embeddings.colwise().mean();
    const Eigen::MatrixXd centered = embeddings.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) {
        throw NumericError("eigendecomposition failed in 2-D projection");
    }
    const Eigen::VectorXd evals = es.eigenvalues();  // ascending
    const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);

    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(embeddings.rows(), 2);
    for (int axis = 0; axis < 2; ++axis) {
        const Eigen::Index idx = evals.size() - 1 - axis;
        if (idx < 0 || evals(idx) <= 1e-10 * scale) {
            continue;  // rank-deficient: leave the axis zero
        }
        Eigen::VectorXd w = es.eigenvectors().col(idx);
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            if (std::abs(w(i)) > 1e-12) {
                if (w(i) < 0.0) {
                    w = -w;
                }
                break;
            }
        }
        out.col(axis) = centered * w;
    }
    return out;
}

std::string report_json_line(const ReportRecord& record) {
    ordered_json j;
    j["protocol"] = record.protocol;
    j["mode"] = record.mode;
    if (!record.attribute.empty()) {
        j["attribute"] = record.attribute;
    }
    j["error"] = record.error;
    if (record.chance.has_value()) {
        j["chance"] = *record.chance;
    }
    j["config_digest"] = record.config_digest;
    j["seed"] = record.seed;
    return j.dump() + "\n";
}

void append_report(const std::filesystem::path& path, const ReportRecord& record) {
    std::string text;
    if (std::filesystem::exists(path)) {
        text = read_file(path);
    }
    text += report_json_line(record);
    atomic_write_file(path, text);
}

std::string report_csv_header() { return "protocol,mode,attribute,error,chance"; }

std::string report_csv_row(const ReportRecord& record) {
    std::string row = record.protocol + "," + record.mode + "," + record.attribute + "," +
                      format_double(record.error) + ",";
    if (record.chance.has_value()) {
        row += format_double(*record.chance);
    }
    return row;
}

}  // namespace crossview::evalsuite
