#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace crossview::objective {

// Pairwise Euclidean distances between two embedding sets (rows).
struct DistanceMatrix {
    Eigen::MatrixXd entries;  // N x M
    int view_rows = 0;        // provenance: view index of the row embeddings
    int view_cols = 1;
};

// Positive assignment per anchor. anchor_index lists the surviving anchor
// rows (identity for mined positives; supervised matching may drop anchors).
struct MiningResult {
    std::vector<int> anchor_index;
    std::vector<int> positive_index;         // parallel to anchor_index
    std::vector<std::uint8_t> is_correct;    // filled when ground truth known
    int dropped = 0;
};

struct LossValue {
    double value = 0.0;
    Eigen::MatrixXd grad_anchors;    // dL/d(anchor rows)
    Eigen::MatrixXd grad_positives;  // dL/d(positive rows)
};

// Loss and embedding gradients for one two-view batch (both directions).
struct PairLoss {
    double value = 0.0;
    Eigen::MatrixXd grad_view0;
    Eigen::MatrixXd grad_view1;
    MiningResult mining01;  // view0 anchors, positives from view1
    MiningResult mining10;
};

DistanceMatrix distance_matrix(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1);

// Row argmin with lowest-index tie break; assignment need not be injective.
MiningResult mine_positives(const DistanceMatrix& d);

// Matches anchors to the row with the same id; unmatched anchors dropped.
MiningResult supervised_positives(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1,
                                  const std::vector<int>& ids0, const std::vector<int>& ids1);

void mark_correct(MiningResult& mining, const std::vector<int>& ids_anchor,
                  const std::vector<int>& ids_other);

// L = (1/N) sum_i log(1 + sum_{j != i} exp(f_i . f_j+  -  f_i . f_i+)),
// row i of positives being the positive for anchor i. Gradients are exact
// partials with respect to the embedding rows.
LossValue npairs_loss(const Eigen::MatrixXd& anchors, const Eigen::MatrixXd& positives);

// Symmetric objective: n-pairs loss with view0 anchoring view1 plus the
// reverse, each direction mining its own positives.
PairLoss cross_view_loss(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1);

// Supervised variant: positives matched by object id instead of mined.
PairLoss cross_view_loss_supervised(const Eigen::MatrixXd& f0, const Eigen::MatrixXd& f1,
                                    const std::vector<int>& ids0, const std::vector<int>& ids1);

}  // namespace crossview::objective
