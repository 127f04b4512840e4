#include "lhc/tree.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace lhc {

using nlohmann::json;

namespace {

struct Builder {
  std::vector<PrefixTree::Node> nodes;

  int make(std::string prefix) {
    nodes.push_back({std::move(prefix), {-1, -1}, std::nullopt});
    return static_cast<int>(nodes.size() - 1);
  }
};

// Renumbers nodes in depth-first preorder (child 0 before child 1).
std::vector<PrefixTree::Node> preorder(const std::vector<PrefixTree::Node>& in) {
  std::vector<PrefixTree::Node> out;
  std::function<int(int)> visit = [&](int idx) {
    const int id = static_cast<int>(out.size());
    out.push_back(in[idx]);
    for (int b = 0; b < 2; ++b) {
      if (in[idx].child[b] >= 0) {
        const int child = visit(in[idx].child[b]);
        out[id].child[b] = child;
      }
    }
    return id;
  };
  visit(0);
  return out;
}

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out;
}

}  // namespace

PrefixTree PrefixTree::build(const StringLookupTable& table) {
  Builder b;
  b.make("");
  for (ClassId c = 0; c < table.num_classes(); ++c) {
    const BitString& s = table.string_for(c);
    int node = 0;
    std::string prefix;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const int bit = s.bits[i];
      prefix.push_back(bit ? '1' : '0');
      if (b.nodes[node].child[bit] < 0) {
        const int created = b.make(prefix);
        b.nodes[node].child[bit] = created;
      }
      node = b.nodes[node].child[bit];
    }
    if (b.nodes[node].class_id) {
      // Unreachable for a validated table.
      throw std::logic_error("prefix tree: duplicate string " + s.str());
    }
    b.nodes[node].class_id = c;
  }
  PrefixTree tree;
  tree.nodes_ = preorder(b.nodes);
  tree.class_names_ = table.class_names();
  tree.length_ = table.length();
  return tree;
}

StringLookupTable PrefixTree::to_table() const {
  std::vector<BitString> strings(num_leaves());
  for (const Node& n : nodes_) {
    if (n.class_id) strings.at(*n.class_id) = BitString::parse(n.prefix);
  }
  return StringLookupTable(std::move(strings), class_names_);
}

json PrefixTree::to_json() const {
  std::function<json(int)> emit = [&](int idx) {
    const Node& n = nodes_[idx];
    json j;
    j["prefix"] = n.prefix;
    if (n.class_id) {
      j["class_id"] = *n.class_id;
      j["class_name"] = class_names_[*n.class_id];
    } else {
      json children = json::array();
      for (int c : n.child) {
        if (c >= 0) children.push_back(emit(c));
      }
      j["children"] = children;
    }
    return j;
  };
  return {{"version", 1}, {"L", length_}, {"root", emit(0)}};
}

PrefixTree PrefixTree::from_json(const json& j) {
  const auto len = j.at("L").get<std::size_t>();
  std::vector<std::pair<ClassId, std::pair<std::string, std::string>>> leaves;
  std::function<void(const json&)> walk = [&](const json& node) {
    if (node.contains("class_id")) {
      leaves.push_back({node.at("class_id").get<ClassId>(),
                        {node.at("prefix").get<std::string>(),
                         node.value("class_name", std::string())}});
      return;
    }
    for (const json& child : node.at("children")) walk(child);
  };
  walk(j.at("root"));
  std::sort(leaves.begin(), leaves.end());
  std::vector<BitString> strings;
  std::vector<std::string> names;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (leaves[i].first != i) throw std::invalid_argument("tree json: class ids must be 0..C-1");
    strings.push_back(BitString::parse(leaves[i].second.first));
    if (strings.back().size() != len) throw std::invalid_argument("tree json: leaf depth differs from L");
    names.push_back(leaves[i].second.second);
  }
  return build(StringLookupTable(std::move(strings), std::move(names)));
}

std::string PrefixTree::to_dot() const {
  std::ostringstream os;
  os << "digraph hierarchy {\n";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.class_id) {
      os << "  n" << i << " [label=\"" << dot_escape(class_names_[*n.class_id]) << "\", shape=box];\n";
    } else {
      os << "  n" << i << " [label=\"" << n.prefix << "\", shape=point];\n";
    }
  }
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (int b = 0; b < 2; ++b) {
      if (nodes_[i].child[b] >= 0) {
        os << "  n" << i << " -> n" << nodes_[i].child[b] << " [label=\"" << b << "\"];\n";
      }
    }
  }
  os << "}\n";
  return os.str();
}

TreeFormat parse_tree_format(const std::string& name) {
  if (name == "dot") return TreeFormat::kDot;
  if (name == "json") return TreeFormat::kJson;
  throw std::invalid_argument("unknown tree format \"" + name + "\" (expected dot or json)");
}

std::string export_tree(const PrefixTree& tree, TreeFormat format) {
  switch (format) {
    case TreeFormat::kDot:
      return tree.to_dot();
    case TreeFormat::kJson:
      return tree.to_json().dump(2) + "\n";
  }
  throw std::invalid_argument("unknown tree format");
}

CanonicalForm canonicalize(const PrefixTree& tree) {
  CanonicalForm form;
  struct Sub {
    std::string term;
    std::vector<ClassId> leaves;  // sorted
  };
  const auto& nodes = tree.nodes();
  std::function<Sub(int)> visit = [&](int idx) -> Sub {
    const auto& n = nodes[idx];
    if (n.class_id) return {std::to_string(*n.class_id), {*n.class_id}};
    std::vector<Sub> kids;
    for (int c : n.child) {
      if (c >= 0) kids.push_back(visit(c));
    }
    std::sort(kids.begin(), kids.end(),
              [](const Sub& a, const Sub& b) { return a.leaves.front() < b.leaves.front(); });
    Sub out;
    out.term = "(";
    for (std::size_t k = 0; k < kids.size(); ++k) {
      if (k) out.term += ' ';
      out.term += kids[k].term;
      out.leaves.insert(out.leaves.end(), kids[k].leaves.begin(), kids[k].leaves.end());
    }
    out.term += ')';
    std::sort(out.leaves.begin(), out.leaves.end());
    form.clusters.insert(out.leaves);
    return out;
  };
  Sub top = visit(0);
  form.term = std::move(top.term);
  form.leaves = std::move(top.leaves);
  return form;
}

double TreeComparison::shared_fraction() const {
  return reference_clusters == 0 ? 1.0
                                 : static_cast<double>(shared_clusters) /
                                       static_cast<double>(reference_clusters);
}

TreeComparison tree_distance(const CanonicalForm& a, const CanonicalForm& b) {
  if (a.leaves != b.leaves) throw std::invalid_argument("tree_distance: leaf sets differ");
  TreeComparison out;
  out.equal = a.term == b.term;
  out.reference_clusters = a.clusters.size();
  for (const auto& c : a.clusters) out.shared_clusters += b.clusters.count(c);
  return out;
}

}  // namespace lhc
