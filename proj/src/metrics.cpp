#include "mrt/metrics.hpp"

#include <algorithm>
#include <stdexcept>

namespace mrt {

std::size_t argmax(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

double classification_accuracy(const std::vector<std::vector<double>>& scores,
                               const std::vector<int>& labels) {
  if (scores.size() != labels.size() || scores.empty())
    throw std::invalid_argument("classification_accuracy: size mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (argmax(scores[i]) == static_cast<std::size_t>(labels[i])) ++correct;
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

MiouResult miou(const std::vector<SegmentedShape>& shapes,
                const std::map<int, std::vector<int>>& category_label_sets) {
  if (shapes.empty()) throw std::invalid_argument("miou: no shapes");
  std::map<int, std::vector<double>> per_cat_shape_ious;
  double instance_sum = 0;

  for (const auto& shape : shapes) {
    auto it = category_label_sets.find(shape.category);
    if (it == category_label_sets.end() || it->second.empty())
      throw std::invalid_argument("miou: empty label set for category " +
                                  std::to_string(shape.category));
    const std::vector<int>& labels = it->second;

    // restrict predictions to the category's label set before argmax
    std::vector<int> pred(shape.gt.size());
    for (std::size_t p = 0; p < shape.gt.size(); ++p) {
      const auto& sc = shape.scores[p];
      int best = labels[0];
      for (int l : labels)
        if (sc[static_cast<std::size_t>(l)] > sc[static_cast<std::size_t>(best)]) best = l;
      pred[p] = best;
    }

    // per-part IoU averaged over parts present in prediction or ground truth
    double iou_sum = 0;
    int present = 0;
    for (int part : labels) {
      std::size_t inter = 0, uni = 0;
      for (std::size_t p = 0; p < shape.gt.size(); ++p) {
        const bool in_gt = shape.gt[p] == part;
        const bool in_pred = pred[p] == part;
        if (in_gt && in_pred) ++inter;
        if (in_gt || in_pred) ++uni;
      }
      if (uni == 0) continue;  // absent from both: excluded by convention
      iou_sum += static_cast<double>(inter) / static_cast<double>(uni);
      ++present;
    }
    const double shape_iou = present > 0 ? iou_sum / present : 1.0;
    per_cat_shape_ious[shape.category].push_back(shape_iou);
    instance_sum += shape_iou;
  }

  MiouResult res;
  res.mean_instance = instance_sum / static_cast<double>(shapes.size());
  double class_sum = 0;
  for (const auto& [cat, ious] : per_cat_shape_ious) {
    double s = 0;
    for (double v : ious) s += v;
    res.per_category[cat] = s / static_cast<double>(ious.size());
    class_sum += res.per_category[cat];
  }
  res.mean_class = class_sum / static_cast<double>(per_cat_shape_ious.size());
  return res;
}

}  // namespace mrt
