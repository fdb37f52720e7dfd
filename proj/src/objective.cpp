#include "crossview/objective.hpp"

#include <cmath>

#include "crossview/errors.hpp"

namespace crossview::objective {

DistanceMatrix distance_matrix(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1) {
    if (f0.cols() != f1.cols()) {
        throw ShapeError("embedding widths differ across views");
    }
    if (f0.rows() < 1 || f1.rows() < 1) {
        throw ShapeError("distance matrix needs at least one row per view");
    }
    DistanceMatrix d;
    d.entries.resize(f0.rows(), f1.rows());
    // Entry-wise (a-b)^2 sums are bitwise symmetric under swapping the two
    // views, which keeps the composed objective exactly view-symmetric.
    for (Eigen::Index n = 0; n < f0.rows(); ++n) {
        for (Eigen::Index m = 0; m < f1.rows(); ++m) {
            d.entries(n, m) = std::sqrt((f0.row(n) - f1.row(m)).squaredNorm());
        }
    }
    return d;
}

MiningResult mine_positives(const DistanceMatrix& d) {
    MiningResult r;
    const Eigen::Index n_rows = d.entries.rows();
    r.anchor_index.resize(static_cast<std::size_t>(n_rows));
    r.positive_index.resize(static_cast<std::size_t>(n_rows));
    for (Eigen::Index n = 0; n < n_rows; ++n) {
        Eigen::Index best = 0;
        for (Eigen::Index m = 1; m < d.entries.cols(); ++m) {
            if (d.entries(n, m) < d.entries(n, best)) {
                best = m;
            }
        }
        r.anchor_index[static_cast<std::size_t>(n)] = static_cast<int>(n);
        r.positive_index[static_cast<std::size_t>(n)] = static_cast<int>(best);
    }
    return r;
}

MiningResult supervised_positives(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1,
                                  const std::vector<int>& ids0, const std::vector<int>& ids1) {
    if (static_cast<Eigen::Index>(ids0.size()) != f0.rows() ||
        static_cast<Eigen::Index>(ids1.size()) != f1.rows()) {
        throw ShapeError("id lists do not match embedding row counts");
    }
    MiningResult r;
    for (std::size_t n = 0; n < ids0.size(); ++n) {
        int match = -1;
        for (std::size_t m = 0; m < ids1.size(); ++m) {
            if (ids1[m] == ids0[n]) {
                match = static_cast<int>(m);
                break;
            }
        }
        if (match < 0) {
            ++r.dropped;
            continue;
        }
        r.anchor_index.push_back(static_cast<int>(n));
        r.positive_index.push_back(match);
        r.is_correct.push_back(1);
    }
    return r;
}

void mark_correct(MiningResult& mining, const std::vector<int>& ids_anchor,
                  const std::vector<int>& ids_other) {
    mining.is_correct.resize(mining.anchor_index.size());
    for (std::size_t k = 0; k < mining.anchor_index.size(); ++k) {
        const int a = mining.anchor_index[k];
        const int p = mining.positive_index[k];
        mining.is_correct[k] =
            ids_anchor[static_cast<std::size_t>(a)] == ids_other[static_cast<std::size_t>(p)] ? 1 : 0;
    }
}

LossValue npairs_loss(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives) {
    if (anchors.rows() != positives.rows() || anchors.cols() != positives.cols()) {
        throw ShapeError("anchors and positives must have identical shape");
    }
    if (!anchors.allFinite() || !positives.allFinite()) {
        throw NumericError("non-finite embeddings passed to loss");
    }
    const Eigen::Index n = anchors.rows();

    // Softmax cross-entropy form: loss_i = logsumexp_j(l_ij) - l_ii with
    // logits l_ij = anchor_i . positive_j, stabilized by the row max.
    Eigen::MatrixXd logits = anchors * positives.transpose();
    Eigen::MatrixXd p(n, n);
    double value = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double row_max = logits.row(i).maxCoeff();
        const Eigen::ArrayXd e = (logits.row(i).array() - row_max).exp();
        const double z = e.sum();
        p.row(i) = (e / z).matrix().transpose();
        value += std::log(z) + row_max - logits(i, i);
    }
    value /= static_cast<double>(n);

    LossValue out;
    out.value = value;
    Eigen::MatrixXd g = p;
    g.diagonal().array() -= 1.0;
    g /= static_cast<double>(n);
    out.grad_anchors = g * positives;
    out.grad_positives = g.transpose() * anchors;
    if (!std::isfinite(out.value)) {
        throw NumericError("loss evaluated to a non-finite value");
    }
    return out;
}

namespace {

PairLoss compose_pair_loss(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1,
                           MiningResult m01, MiningResult m10) {
    PairLoss out;
    out.grad_view0 = Eigen::MatrixXd::Zero(f0.rows(), f0.cols());
    out.grad_view1 = Eigen::MatrixXd::Zero(f1.rows(), f1.cols());

    double v01 = 0.0;
    if (!m01.anchor_index.empty()) {
        Eigen::MatrixXd a(m01.anchor_index.size(), f0.cols());
        Eigen::MatrixXd b(m01.anchor_index.size(), f1.cols());
        for (std::size_t k = 0; k < m01.anchor_index.size(); ++k) {
            a.row(static_cast<Eigen::Index>(k)) = f0.row(m01.anchor_index[k]);
            b.row(static_cast<Eigen::Index>(k)) = f1.row(m01.positive_index[k]);
        }
        LossValue l = npairs_loss(a, b);
        v01 = l.value;
        for (std::size_t k = 0; k < m01.anchor_index.size(); ++k) {
            out.grad_view0.row(m01.anchor_index[k]) += l.grad_anchors.row(static_cast<Eigen::Index>(k));
            out.grad_view1.row(m01.positive_index[k]) +=
                l.grad_positives.row(static_cast<Eigen::Index>(k));
        }
    }

    double v10 = 0.0;
    if (!m10.anchor_index.empty()) {
        Eigen::MatrixXd a(m10.anchor_index.size(), f1.cols());
        Eigen::MatrixXd b(m10.anchor_index.size(), f0.cols());
        for (std::size_t k = 0; k < m10.anchor_index.size(); ++k) {
            a.row(static_cast<Eigen::Index>(k)) = f1.row(m10.anchor_index[k]);
            b.row(static_cast<Eigen::Index>(k)) = f0.row(m10.positive_index[k]);
        }
        LossValue l = npairs_loss(a, b);
        v10 = l.value;
        for (std::size_t k = 0; k < m10.anchor_index.size(); ++k) {
            out.grad_view1.row(m10.anchor_index[k]) += l.grad_anchors.row(static_cast<Eigen::Index>(k));
            out.grad_view0.row(m10.positive_index[k]) +=
                l.grad_positives.row(static_cast<Eigen::Index>(k));
        }
    }

    out.value = v01 + v10;
    out.mining01 = std::move(m01);
    out.mining10 = std::move(m10);
    return out;
}

}  // namespace

PairLoss cross_view_loss(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1) {
    DistanceMatrix d = distance_matrix(f0, f1);
    MiningResult m01 = mine_positives(d);
    DistanceMatrix dt;
    dt.entries = d.entries.transpose();
    dt.view_rows = 1;
    dt.view_cols = 0;
    MiningResult m10 = mine_positives(dt);
    return compose_pair_loss(f0, f1, std::move(m01), std::move(m10));
}

PairLoss cross_view_loss_supervised(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1,
                                    const std::vector<int>& ids0, const std::vector<int>& ids1) {
    MiningResult m01 = supervised_positives(f0, f1, ids0, ids1);
    MiningResult m10 = supervised_positives(f1, f0, ids1, ids0);
    return compose_pair_loss(f0, f1, std::move(m01), std::move(m10));
}

}  // namespace crossview::objective
