#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace mrt {

// Instance accuracy from per-sample class scores (logits or averaged
// probabilities; argmax is invariant to which). scores: [B][K].
double classification_accuracy(const std::vector<std::vector<double>>& scores,
                               const std::vector<int>& labels);

// argmax with lowest-index tie-break
std::size_t argmax(const std::vector<double>& v);

struct MiouResult {
  double mean_class = 0;     // average of per-category mIoU
  double mean_instance = 0;  // average of per-shape mIoU
  std::map<int, double> per_category;
};

struct SegmentedShape {
  int category = 0;
  std::vector<int> gt;                       // per-point ground-truth part ids
  std::vector<std::vector<double>> scores;   // per-point scores over all parts
};

// Part IoU protocol: scores are masked to the shape's category label set
// before argmax; per-part IoU is averaged per shape (parts absent from both
// prediction and ground truth are excluded), then per category.
MiouResult miou(const std::vector<SegmentedShape>& shapes,
                const std::map<int, std::vector<int>>& category_label_sets);

}  // namespace mrt
