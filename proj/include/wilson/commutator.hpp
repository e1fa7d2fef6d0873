#pragma once

// Activation commutators: how far two submodules are from commuting on real
// residual states, and how that predicts output drift when their execution
// order is actually swapped.

#include "wilson/model.hpp"
#include "wilson/numerics.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace wilson {

// Residual states (each T x d_model), the calibration currency of this
// module. All submodules act on a state and return one of the same shape.
using ResidualBatch = std::vector<Matd>;

enum class SubmoduleKind { attention_head, attention_sublayer, mlp_sublayer };

struct Submodule {
  std::string id;
  SubmoduleKind kind = SubmoduleKind::attention_sublayer;
  int layer = 0;
  int head = -1;  // meaningful for attention_head only
  // Pure function on a detached copy of the residual state; composition here
  // is functional composition on activations, never a rewiring of the model.
  std::function<Matd(const Matd&)> apply;
};

// Factories close over `w`, which must outlive the submodule. Ids follow the
// artifact convention: "layer2.attn", "layer2.mlp", "layer2.head3".
Submodule make_attention_sublayer(const ModelWeights<double>& w, int layer);
Submodule make_mlp_sublayer(const ModelWeights<double>& w, int layer);
Submodule make_attention_head(const ModelWeights<double>& w, int layer,
                              int head);

struct CommutatorRecord {
  std::string module_a;  // lexicographically <= module_b
  std::string module_b;
  double delta_fro = 0;
  std::optional<double> drift;
  std::string batch_id;
};

// Delta_{A,B} = || A(B(X)) - B(A(X)) ||_F over the flattened batch.
double commutator_norm(const Submodule& a, const Submodule& b,
                       const ResidualBatch& batch);

struct CommutatorMap {
  std::vector<std::string> ids;
  Matd delta;  // symmetric, exactly zero diagonal
  std::vector<CommutatorRecord> records;  // one per unordered pair
};

CommutatorMap commutator_map(const std::vector<Submodule>& modules,
                             const ResidualBatch& batch,
                             const std::string& batch_id = "");

// Output drift under an order swap: run the full model once with a-then-b
// and once with b-then-a inside their block, and take the L2 distance of the
// final-position logits. Only sublayer pairs within one block are a
// semantically plausible swap.
double reorder_drift(const ModelWeights<double>& w,
                     const std::vector<int>& tokens, const Submodule& a,
                     const Submodule& b);

struct DriftCorrelation {
  double spearman = 0;
  double pearson = 0;
  double theil_sen = 0;
  bool degenerate = false;  // some statistic is NaN (e.g. constant drift)
  std::string warning;
};

// Correlates delta_fro with measured drift across records; records without a
// drift value are ignored.
DriftCorrelation delta_drift_correlation(
    const std::vector<CommutatorRecord>& records);

// Residual states entering `layer` for each token sequence.
ResidualBatch collect_residuals(const ModelWeights<double>& w,
                                const std::vector<std::vector<int>>& sequences,
                                int layer);

}  // namespace wilson
