#include "fedseq/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace fedseq {

MetricsReport macro_metrics(const std::vector<EventId>& predictions,
                            const std::vector<EventId>& labels, std::uint32_t class_count) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("macro_metrics: predictions/labels length mismatch");
  }
  if (predictions.empty()) throw std::invalid_argument("macro_metrics: empty input");

  const std::uint64_t total = predictions.size();
  std::vector<std::uint64_t> tp(class_count, 0), fp(class_count, 0), fn(class_count, 0);
  std::uint64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const EventId p = predictions[i], l = labels[i];
    if (p >= class_count || l >= class_count) {
      throw std::invalid_argument("macro_metrics: id out of class range");
    }
    if (p == l) {
      ++tp[l];
      ++correct;
    } else {
      ++fp[p];
      ++fn[l];
    }
  }

  MetricsReport rep;
  double sum_p = 0, sum_r = 0, sum_fpr = 0, sum_acc = 0;
  std::size_t used = 0;
  for (std::uint32_t c = 0; c < class_count; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;  // class never appeared
    ClassCounts cc;
    cc.cls = c;
    cc.tp = tp[c];
    cc.fp = fp[c];
    cc.fn = fn[c];
    cc.tn = total - tp[c] - fp[c] - fn[c];
    sum_p += cc.tp + cc.fp > 0 ? double(cc.tp) / double(cc.tp + cc.fp) : 0.0;
    sum_r += cc.tp + cc.fn > 0 ? double(cc.tp) / double(cc.tp + cc.fn) : 0.0;
    sum_fpr += cc.fp + cc.tn > 0 ? double(cc.fp) / double(cc.fp + cc.tn) : 0.0;
    sum_acc += double(cc.tp + cc.tn) / double(total);
    rep.per_class.push_back(cc);
    ++used;
  }
  if (used == 0) throw std::invalid_argument("macro_metrics: no class appeared");

  rep.precision = sum_p / double(used);
  rep.recall = sum_r / double(used);
  rep.fpr = sum_fpr / double(used);
  rep.accuracy = sum_acc / double(used);
  rep.top1_accuracy = double(correct) / double(total);
  rep.f1 = rep.precision + rep.recall > 0
               ? 2.0 * rep.precision * rep.recall / (rep.precision + rep.recall)
               : 0.0;
  return rep;
}

MetricsReport evaluate_model(const ModelConfig& cfg, const ParamVector& params,
                             const EventCorpus& data) {
  if (data.empty()) throw std::invalid_argument("evaluate_model: empty corpus");
  std::vector<EventId> preds, labels;
  preds.reserve(data.size());
  labels.reserve(data.size());
  for (const auto& seq : data.sequences) {
    preds.push_back(predict(cfg, params, seq));
    labels.push_back(seq.label());
  }
  // The model may predict any event id; widen the class range so stray
  // predictions outside the label space count as false positives.
  return macro_metrics(preds, labels, std::max(data.class_count, data.vocab_size));
}

}  // namespace fedseq
