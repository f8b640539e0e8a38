#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vislabel/error.hpp"

namespace vislabel {

using json = nlohmann::ordered_json;

// Positional conceptual identifier: the 1-based child index at every level,
// rendered dash-joined ("1-1", "2-5-3"). Lexicographic order on the path is
// document (pre-)order of the hierarchy.
class ConceptId {
 public:
  explicit ConceptId(std::vector<std::uint32_t> path) : path_(std::move(path)) {
    if (path_.empty()) throw ParseError("concept-id", "empty concept id");
    for (auto k : path_)
      if (k == 0) throw ParseError("concept-id", "concept id indices are 1-based");
  }

  static ConceptId root(std::uint32_t position) { return ConceptId({position}); }

  static ConceptId parse(std::string_view text) {
    std::vector<std::uint32_t> path;
    std::size_t start = 0;
    while (true) {
      auto dash = text.find('-', start);
      auto part = text.substr(start, dash == std::string_view::npos ? text.npos : dash - start);
      std::uint32_t value = 0;
      auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
      if (part.empty() || ec != std::errc{} || ptr != part.data() + part.size() || value == 0)
        throw ParseError("concept-id", "malformed concept id \"" + std::string(text) + "\"");
      path.push_back(value);
      if (dash == std::string_view::npos) break;
      start = dash + 1;
    }
    return ConceptId(std::move(path));
  }

  static std::optional<ConceptId> try_parse(std::string_view text) {
    try {
      return parse(text);
    } catch (const ParseError&) {
      return std::nullopt;
    }
  }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < path_.size(); ++i) {
      if (i) out += '-';
      out += std::to_string(path_[i]);
    }
    return out;
  }

  std::span<const std::uint32_t> path() const noexcept { return path_; }
  std::size_t depth() const noexcept { return path_.size(); }
  bool is_root() const noexcept { return path_.size() == 1; }
  std::uint32_t position() const noexcept { return path_.back(); }

  ConceptId parent() const {
    if (is_root()) throw NotFoundError("root " + str() + " has no parent");
    return prefix(depth() - 1);
  }

  ConceptId child(std::uint32_t position) const {
    auto p = path_;
    p.push_back(position);
    return ConceptId(std::move(p));
  }

  ConceptId prefix(std::size_t length) const {
    return ConceptId(std::vector<std::uint32_t>(path_.begin(), path_.begin() + length));
  }

  bool is_ancestor_or_self_of(const ConceptId& other) const noexcept {
    return depth() <= other.depth() && std::equal(path_.begin(), path_.end(), other.path_.begin());
  }

  auto operator<=>(const ConceptId&) const = default;
  bool operator==(const ConceptId&) const = default;

 private:
  std::vector<std::uint32_t> path_;
};

struct VisualCategory {
  ConceptId id;
  std::string name;
  std::string genus;
  std::string differentia;
  std::optional<std::string> provenance;
  std::vector<VisualCategory> children;

  bool is_leaf() const noexcept { return children.empty(); }
  bool operator==(const VisualCategory&) const = default;
};

// Immutable category forest. Copies share the underlying tree.
class Hierarchy {
 public:
  Hierarchy() : data_(std::make_shared<Data>()) {}

  explicit Hierarchy(std::vector<VisualCategory> roots) {
    auto data = std::make_shared<Data>();
    data->roots = std::move(roots);
    for (const auto& r : data->roots) index_subtree(*data, r);
    data_ = std::move(data);
  }

  std::span<const VisualCategory> roots() const noexcept { return data_->roots; }
  std::size_t size() const noexcept { return data_->index.size(); }
  bool empty() const noexcept { return data_->roots.empty(); }

  const VisualCategory* find(const ConceptId& id) const {
    auto it = data_->index.find(id);
    return it == data_->index.end() ? nullptr : it->second;
  }

  bool contains(const ConceptId& id) const { return find(id) != nullptr; }

  const VisualCategory& lookup(const ConceptId& id) const {
    if (auto* n = find(id)) return *n;
    throw NotFoundError("no category with id " + id.str());
  }

  // Root first; excludes the node itself.
  std::vector<const VisualCategory*> ancestors(const ConceptId& id) const {
    lookup(id);
    std::vector<const VisualCategory*> out;
    for (std::size_t len = 1; len < id.depth(); ++len) out.push_back(&lookup(id.prefix(len)));
    return out;
  }

  // Root first; includes the node itself.
  std::vector<const VisualCategory*> path_to(const ConceptId& id) const {
    auto out = ancestors(id);
    out.push_back(&lookup(id));
    return out;
  }

  // Nodes without children, in document order.
  std::vector<const VisualCategory*> leaves() const {
    std::vector<const VisualCategory*> out;
    for (const auto& [id, node] : data_->index)
      if (node->is_leaf()) out.push_back(node);
    return out;
  }

  // Every node in document order.
  std::vector<const VisualCategory*> nodes() const {
    std::vector<const VisualCategory*> out;
    out.reserve(data_->index.size());
    for (const auto& [id, node] : data_->index) out.push_back(node);
    return out;
  }

  friend bool operator==(const Hierarchy& a, const Hierarchy& b) {
    return a.data_ == b.data_ || a.data_->roots == b.data_->roots;
  }

 private:
  struct Data {
    std::vector<VisualCategory> roots;
    std::map<ConceptId, const VisualCategory*> index;
  };

  static void index_subtree(Data& data, const VisualCategory& node) {
    if (!data.index.emplace(node.id, &node).second)
      throw IntegrityError("duplicate concept id " + node.id.str());
    for (const auto& c : node.children) index_subtree(data, c);
  }

  std::shared_ptr<const Data> data_;
};

namespace detail {

inline std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ":" + std::to_string(col);
}

inline json parse_json_text(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line_column(text, e.byte), e.what());
  }
}

inline const json& require_field(const json& obj, const char* key, json::value_t type,
                                 const std::string& locus) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(locus, std::string("missing field \"") + key + "\"");
  if (it->type() != type)
    throw ParseError(locus + "/" + key, std::string("field \"") + key + "\" has type " +
                                            it->type_name());
  return *it;
}

inline std::optional<std::string> optional_string(const json& obj, const char* key,
                                                  const std::string& locus) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string())
    throw ParseError(locus + "/" + key, std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

struct NodeDraft {
  std::string stored_id;
  std::string locus;
};

inline VisualCategory build_node(const json& j, const ConceptId& position_id,
                                 const std::string& locus, std::vector<Violation>& violations,
                                 std::map<std::string, std::vector<std::string>>& seen_ids) {
  if (!j.is_object()) throw ParseError(locus, "category node must be an object");
  auto stored = require_field(j, "id", json::value_t::string, locus).get<std::string>();
  auto name = require_field(j, "name", json::value_t::string, locus).get<std::string>();
  auto genus = require_field(j, "genus", json::value_t::string, locus).get<std::string>();
  auto differentia =
      require_field(j, "differentia", json::value_t::string, locus).get<std::string>();
  auto provenance = optional_string(j, "provenance", locus);

  seen_ids[stored].push_back(locus);
  auto parsed = ConceptId::try_parse(stored);
  if (!parsed) {
    violations.push_back({"malformed_id", locus, "id \"" + stored + "\" is not a dash-joined index path"});
  } else if (*parsed != position_id) {
    violations.push_back({"id_position_mismatch", locus,
                          "id \"" + stored + "\" contradicts tree position " + position_id.str()});
  }
  if (name.empty()) violations.push_back({"empty_name", locus, "name is empty"});
  if (differentia.empty())
    violations.push_back({"empty_differentia", locus, "differentia of " + stored + " is empty"});
  if (!position_id.is_root() && genus.empty())
    violations.push_back({"empty_genus", locus, "genus of non-root " + stored + " is empty"});

  VisualCategory node{position_id, std::move(name), std::move(genus), std::move(differentia),
                      std::move(provenance), {}};
  if (auto it = j.find("children"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ParseError(locus + "/children", "children must be an array");
    std::uint32_t k = 0;
    for (const auto& c : *it) {
      ++k;
      node.children.push_back(build_node(c, position_id.child(k),
                                         locus + "/children/" + std::to_string(k - 1), violations,
                                         seen_ids));
    }
  }
  return node;
}

inline void node_to_json(const VisualCategory& n, json& out) {
  out = json::object();
  out["id"] = n.id.str();
  out["name"] = n.name;
  out["genus"] = n.genus;
  out["differentia"] = n.differentia;
  if (n.provenance) out["provenance"] = *n.provenance;
  json children = json::array();
  for (const auto& c : n.children) {
    json cj;
    node_to_json(c, cj);
    children.push_back(std::move(cj));
  }
  out["children"] = std::move(children);
}

}  // namespace detail

// Builds a hierarchy from its JSON document form. Shape errors raise
// ParseError; all invariant violations are collected into one ValidationError.
inline Hierarchy hierarchy_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("/", "hierarchy document must be an object");
  const auto& roots = detail::require_field(doc, "roots", json::value_t::array, "");
  std::vector<Violation> violations;
  std::map<std::string, std::vector<std::string>> seen_ids;
  std::vector<VisualCategory> built;
  std::uint32_t k = 0;
  for (const auto& r : roots) {
    ++k;
    built.push_back(detail::build_node(r, ConceptId::root(k), "/roots/" + std::to_string(k - 1),
                                       violations, seen_ids));
  }
  for (const auto& [id, loci] : seen_ids) {
    if (loci.size() < 2) continue;
    std::string where;
    for (const auto& l : loci) where += (where.empty() ? "" : ", ") + l;
    violations.push_back({"duplicate_id", loci.front(),
                          "id \"" + id + "\" appears " + std::to_string(loci.size()) +
                              " times (" + where + ")"});
  }
  if (!violations.empty()) throw ValidationError(std::move(violations));
  return Hierarchy(std::move(built));
}

inline Hierarchy parse_hierarchy(std::string_view document) {
  return hierarchy_from_json(detail::parse_json_text(document));
}

inline json hierarchy_to_json(const Hierarchy& h) {
  json doc = json::object();
  json roots = json::array();
  for (const auto& r : h.roots()) {
    json rj;
    detail::node_to_json(r, rj);
    roots.push_back(std::move(rj));
  }
  doc["roots"] = std::move(roots);
  return doc;
}

}  // namespace vislabel
