#pragma once

#include "knowself/labeler.hpp"

namespace knowself {

struct StageConfig {
    double lr = 0.05;
    int batch = 8;
    int epochs = 3;
};

struct TrainConfig {
    StageConfig stage1{0.05, 8, 3};   // lr scaled for the linear model (paper: 2e-5)
    StageConfig stage2{0.005, 3, 1};  // paper: 5e-7
    double beta = 0.5;
    double alpha = 1.0;
    uint64_t seed = 0;
};

// Gradient accumulator with the same shapes as PolicyParams.
struct GradAccum {
    Matrix act, cont, tmpl, know;

    static GradAccum zeros_like(const PolicyParams& p);
    void axpy(double a, const GradAccum& other);
    double norm() const;
    bool finite() const;
};

struct LossGrad {
    double loss = 0.0;
    GradAccum grad;
};

struct TrainStepMetrics {
    int stage = 1;
    int epoch = 0;
    int step = 0;
    double sft = 0.0;
    double dpo = 0.0;
    double nll = 0.0;
    double rpo = 0.0;
    double grad_norm = 0.0;
};

using MetricsSink = std::function<void(const TrainStepMetrics&)>;

// Resolves the teacher-forced entry for a knowledgeable output (by id, then
// by rule text); nullptr for outputs without knowledge.
const KnowledgeEntry* resolve_entry(const KnowledgeBase& kb, const StructuredOutput& y);

// L_SFT = -mean log pi(y | h). Returns the exact analytic gradient.
LossGrad sft_loss(const PolicyParams& p, const std::vector<const SelfAwareSample*>& batch,
                  const KnowledgeBase& kb, DecodeMode mode = DecodeMode::Free);

// L_DPO = -mean log sigmoid(beta * [(log pi/pi_ref)(y) - (log pi/pi_ref)(y^p)]).
LossGrad dpo_loss(const PolicyParams& p, const PolicyParams& ref,
                  const std::vector<const PairSample*>& batch, const KnowledgeBase& kb,
                  double beta);

// L_NLL = -mean log pi(y | h) / |y|, chosen outputs only.
LossGrad nll_loss(const PolicyParams& p, const std::vector<const PairSample*>& batch,
                  const KnowledgeBase& kb);

void apply_update(PolicyParams& p, const GradAccum& grad, double lr);

// Stage 1: SFT over shuffled mini-batches; deterministic under the seed.
PolicyParams train_stage1(const TrainConfig& cfg, const std::vector<SelfAwareSample>& d_self,
                          const KnowledgeBase& kb, EnvKind kind,
                          const MetricsSink& sink = {});

// Stage 2: RPO = DPO + alpha * NLL against the frozen stage-1 reference.
// An empty pair set returns the reference unchanged.
PolicyParams train_stage2(const TrainConfig& cfg, const PolicyParams& ref,
                          const std::vector<PairSample>& d_pair, const KnowledgeBase& kb,
                          const MetricsSink& sink = {});

}  // namespace knowself
