#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lhc/pipeline.hpp"

namespace lhc {

// Binary prefix tree over the class strings. All leaves sit at depth L;
// single-child chains are kept so that leaf paths spell the strings exactly.
class PrefixTree {
 public:
  struct Node {
    std::string prefix;
    std::array<int, 2> child{-1, -1};
    std::optional<ClassId> class_id;

    bool is_leaf() const { return class_id.has_value(); }
  };

  static PrefixTree build(const StringLookupTable& table);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  std::size_t length() const { return length_; }
  std::size_t num_leaves() const { return class_names_.size(); }
  std::size_t num_internal() const { return nodes_.size() - num_leaves(); }
  const std::vector<std::string>& class_names() const { return class_names_; }

  // Reads the leaf paths back into a table.
  StringLookupTable to_table() const;

  // JSON schema {version, L, root: {prefix, children: [...] | class_id, class_name}}.
  nlohmann::json to_json() const;
  static PrefixTree from_json(const nlohmann::json& j);
  std::string to_dot() const;

 private:
  std::vector<Node> nodes_;
  std::vector<std::string> class_names_;
  std::size_t length_ = 0;
};

enum class TreeFormat { kDot, kJson };

TreeFormat parse_tree_format(const std::string& name);
std::string export_tree(const PrefixTree& tree, TreeFormat format);

// Hierarchy up to swapping the 0/1 children of any internal node.
struct CanonicalForm {
  // Nested term; children ordered by their smallest leaf id.
  std::string term;
  // Leaf set of every internal node (including the root), deduplicated.
  std::set<std::vector<ClassId>> clusters;
  std::vector<ClassId> leaves;

  bool operator==(const CanonicalForm& other) const { return term == other.term; }
};

CanonicalForm canonicalize(const PrefixTree& tree);

struct TreeComparison {
  bool equal = false;
  std::size_t shared_clusters = 0;
  std::size_t reference_clusters = 0;
  // shared_clusters / reference_clusters, with `a` as the reference.
  double shared_fraction() const;
};

// Throws std::invalid_argument when the leaf sets differ.
TreeComparison tree_distance(const CanonicalForm& a, const CanonicalForm& b);

}  // namespace lhc
