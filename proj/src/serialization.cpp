#include "sumflow/serialization.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace sumflow {

using nlohmann::json;

std::string format_double(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

namespace {

void append_id_list(std::string& out, const std::vector<NodeId>& ids) {
  out += '[';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(ids[i]);
  }
  out += ']';
}

}  // namespace

std::string serialize(const Spn& spn, const LayerIndexMap* map) {
  std::string out;
  out.reserve(spn.node_count() * 64);
  out += "{\n";
  out += "  \"num_variables\": " + std::to_string(spn.num_variables()) + ",\n";
  out += "  \"root\": " + std::to_string(spn.root()) + ",\n";
  out += "  \"nodes\": [\n";
  for (NodeId id = 0; id < spn.node_count(); ++id) {
    out += "    {\"id\": " + std::to_string(id);
    if (spn.is_sum(id)) {
      const SumNode& s = spn.sum(id);
      out += ", \"type\": \"sum\", \"children\": ";
      append_id_list(out, s.children);
      out += ", \"weights\": [";
      for (std::size_t c = 0; c < s.weights.size(); ++c) {
        if (c) out += ',';
        out += format_double(s.weights[c]);
      }
      out += "]";
    } else if (spn.is_product(id)) {
      out += ", \"type\": \"product\", \"children\": ";
      append_id_list(out, spn.product(id).children);
    } else {
      const LeafNode& l = spn.leaf(id);
      out += ", \"type\": \"leaf\", \"variable\": " +
             std::to_string(l.variable) + ", \"dist\": ";
      if (const auto* b = std::get_if<Bernoulli>(&l.dist)) {
        out += "{\"kind\": \"bernoulli\", \"p\": " + format_double(b->p) + "}";
      } else {
        out += "{\"kind\": \"indicator\", \"value\": " +
               std::to_string(std::get<Indicator>(l.dist).value) + "}";
      }
    }
    out += id + 1 < spn.node_count() ? "},\n" : "}\n";
  }
  out += "  ]";
  if (map) {
    out += ",\n  \"layer_map\": [";
    for (std::size_t k = 0; k < map->chains.size(); ++k) {
      if (k) out += ',';
      out += '[';
      for (std::size_t l = 0; l < map->chains[k].size(); ++l) {
        if (l) out += ',';
        out += '[' + std::to_string(map->chains[k][l].node) + ',' +
               std::to_string(map->chains[k][l].child) + ']';
      }
      out += ']';
    }
    out += "]";
  }
  out += "\n}\n";
  return out;
}

namespace {

// Line/column of a byte offset, for parse diagnostics.
std::pair<std::size_t, std::size_t> position_of(std::string_view text,
                                                std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const json& require(const json& obj, const char* key, const char* ctx) {
  auto it = obj.find(key);
  if (it == obj.end())
    throw Error(std::string("model: missing \"") + key + "\" in " + ctx);
  return *it;
}

std::uint64_t as_uint(const json& v, const char* what) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() &&
                                   v.get<std::int64_t>() >= 0))
    throw Error(std::string("model: ") + what + " must be a non-negative "
                "integer");
  return v.get<std::uint64_t>();
}

}  // namespace

ParsedModel parse_model(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = position_of(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError(std::string("model: ") + e.what(), line, col);
  }
  if (!doc.is_object()) throw Error("model: top level must be an object");

  const std::int64_t num_vars =
      static_cast<std::int64_t>(as_uint(require(doc, "num_variables", "model"),
                                        "num_variables"));
  const json& nodes_json = require(doc, "nodes", "model");
  if (!nodes_json.is_array() || nodes_json.empty())
    throw Error("model: \"nodes\" must be a non-empty array");

  // File ids may be arbitrary unique integers; map them onto dense indices
  // in order of appearance.
  std::unordered_map<std::uint64_t, NodeId> dense;
  for (const json& n : nodes_json) {
    if (!n.is_object()) throw Error("model: node entries must be objects");
    const std::uint64_t id = as_uint(require(n, "id", "node"), "node id");
    if (!dense.emplace(id, static_cast<NodeId>(dense.size())).second)
      throw Error("model: duplicate node id " + std::to_string(id));
  }
  const auto lookup = [&](std::uint64_t id, const char* ctx) {
    auto it = dense.find(id);
    if (it == dense.end())
      throw Error(std::string("model: ") + ctx + " references unknown node " +
                  std::to_string(id));
    return it->second;
  };

  std::vector<Node> nodes(dense.size());
  std::size_t slot = 0;
  for (const json& n : nodes_json) {
    const std::string type =
        require(n, "type", "node").get<std::string>();
    const std::string ctx = "node " + std::to_string(slot);
    if (type == "sum") {
      SumNode s;
      for (const json& c : require(n, "children", ctx.c_str()))
        s.children.push_back(lookup(as_uint(c, "child id"), ctx.c_str()));
      for (const json& w : require(n, "weights", ctx.c_str())) {
        if (!w.is_number())
          throw Error("model: weights must be numbers in " + ctx);
        s.weights.push_back(w.get<double>());
      }
      nodes[slot] = std::move(s);
    } else if (type == "product") {
      ProductNode p;
      for (const json& c : require(n, "children", ctx.c_str()))
        p.children.push_back(lookup(as_uint(c, "child id"), ctx.c_str()));
      nodes[slot] = std::move(p);
    } else if (type == "leaf") {
      LeafNode l;
      l.variable = static_cast<std::int32_t>(
          as_uint(require(n, "variable", ctx.c_str()), "variable"));
      const json& dist = require(n, "dist", ctx.c_str());
      const std::string kind =
          require(dist, "kind", "dist").get<std::string>();
      if (kind == "bernoulli") {
        const json& p = require(dist, "p", "dist");
        if (!p.is_number()) throw Error("model: p must be a number in " + ctx);
        l.dist = Bernoulli{p.get<double>()};
      } else if (kind == "indicator") {
        l.dist = Indicator{static_cast<std::uint8_t>(
            as_uint(require(dist, "value", "dist"), "indicator value"))};
      } else {
        throw Error("model: unknown dist kind \"" + kind + "\" in " + ctx);
      }
      nodes[slot] = std::move(l);
    } else {
      throw Error("model: unknown node type \"" + type + "\" in " + ctx);
    }
    ++slot;
  }

  const NodeId root =
      lookup(as_uint(require(doc, "root", "model"), "root"), "root");

  ParsedModel out{Spn(std::move(nodes), root,
                      static_cast<std::int32_t>(num_vars)),
                  std::nullopt};

  if (auto it = doc.find("layer_map"); it != doc.end()) {
    LayerIndexMap map;
    if (!it->is_array()) throw Error("model: layer_map must be an array");
    for (const json& chain : *it) {
      std::vector<EdgeRef> edges;
      for (const json& e : chain) {
        if (!e.is_array() || e.size() != 2)
          throw Error("model: layer_map entries must be [node, child] pairs");
        const NodeId node = lookup(as_uint(e[0], "layer_map node"),
                                   "layer_map");
        const std::int64_t child =
            static_cast<std::int64_t>(as_uint(e[1], "layer_map child"));
        if (!out.spn.is_sum(node) ||
            child >= static_cast<std::int64_t>(out.spn.sum(node).children.size()))
          throw Error("model: layer_map references a non-existent sum edge");
        edges.push_back({node, static_cast<std::int32_t>(child)});
      }
      map.chains.push_back(std::move(edges));
    }
    out.layer_map = std::move(map);
  }
  return out;
}

ParsedModel deserialize(std::string_view text) {
  ParsedModel model = parse_model(text);
  const std::vector<Violation> violations = model.spn.validate();
  if (!violations.empty()) {
    std::string msg = "model: invalid network:";
    for (const Violation& v : violations) msg += "\n  " + v.to_string();
    throw Error(msg);
  }
  return model;
}

ParsedModel load_model(const std::filesystem::path& path, bool validate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  return validate ? deserialize(text) : parse_model(text);
}

void save_model(const std::filesystem::path& path, const Spn& spn,
                const LayerIndexMap* map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << serialize(spn, map);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace sumflow
