#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kbref/tensor.hpp"
#include "kbref/tensor_file.hpp"

namespace kbref {

struct Box {
  double x_tl = 0, y_tl = 0, x_br = 0, y_br = 0;
};

struct SampleCandidate {
  Box box;
  std::string category;
};

// One referring expression with its candidate objects.
//
// JSONL schema, one object per line:
//   {"expression": str, "pos": [str]?, "image_id": str,
//    "width": num, "height": num,
//    "candidates": [{"box": [x_tl, y_tl, x_br, y_br], "category": str}, ...],
//    "target_index": int, "gt_fact_id": int?}
// `pos` runs parallel to tokenize(expression).
struct Sample {
  std::string expression;
  std::vector<std::string> tokens;  // tokenize(expression), cached at load
  std::optional<std::vector<std::string>> pos;
  std::string image_id;
  double image_width = 0;
  double image_height = 0;
  std::vector<SampleCandidate> candidates;
  int64_t target_index = -1;
  std::optional<int64_t> gt_fact_id;
};

std::vector<Sample> load_samples(std::istream& in, const std::string& origin);
std::vector<Sample> load_samples_file(const std::string& path);
void save_samples(std::ostream& out, const std::vector<Sample>& samples);
void save_samples_file(const std::string& path, const std::vector<Sample>& samples);

// Externally computed image features, stored in a KBRF container:
//   "grid/<image_id>"             [grid, grid, channels]
//   "app/<image_id>/<cand_index>" [app_dim]
// Image ids must not contain '/'.
class FeaturePack {
 public:
  void set_grid(const std::string& image_id, Tensor t);
  void set_appearance(const std::string& image_id, int64_t candidate, Tensor t);

  bool has_grid(const std::string& image_id) const;
  bool has_appearance(const std::string& image_id, int64_t candidate) const;
  const Tensor& grid(const std::string& image_id) const;
  const Tensor& appearance(const std::string& image_id, int64_t candidate) const;

  TensorContainer to_container() const;
  static FeaturePack from_container(const TensorContainer& c);
  void save(const std::string& path) const;
  static FeaturePack load(const std::string& path);

 private:
  std::map<std::string, Tensor> grid_;
  std::map<std::pair<std::string, int64_t>, Tensor> appearance_;
};

}  // namespace kbref
