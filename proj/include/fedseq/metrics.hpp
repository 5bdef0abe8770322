#pragma once

#include <cstdint>
#include <vector>

#include "fedseq/events.hpp"
#include "fedseq/neural.hpp"

namespace fedseq {

struct ClassCounts {
  std::uint32_t cls = 0;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// One-vs-rest metrics averaged with equal weight over every class that has at
// least one true or predicted instance. `accuracy` is the macro-averaged
// per-class (TP+TN)/total; `top1_accuracy` is the plain fraction of correct
// predictions (chance level 1/V), which is the stricter number for
// multi-class work.
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double fpr = 0.0;
  double top1_accuracy = 0.0;
  std::vector<ClassCounts> per_class;  // only classes that appeared
};

MetricsReport macro_metrics(const std::vector<EventId>& predictions,
                            const std::vector<EventId>& labels, std::uint32_t class_count);

// Predict every sequence in `data` and score against its labels.
MetricsReport evaluate_model(const ModelConfig& cfg, const ParamVector& params,
                             const EventCorpus& data);

}  // namespace fedseq
