#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "fewgraph/graph.hpp"

namespace fewgraph {

namespace {

using nlohmann::json;

[[noreturn]] void line_error(std::size_t line, const std::string& msg) {
  throw std::runtime_error("line " + std::to_string(line) + ": " + msg);
}

Graph parse_graph_line(const json& j, std::size_t line, std::size_t degree_cap,
                       std::string* split_out) {
  for (const char* key : {"id", "split", "label", "num_nodes", "edges"}) {
    if (!j.contains(key)) line_error(line, std::string("missing required field \"") + key + "\"");
  }
  Graph g;
  if (!j["id"].is_string()) line_error(line, "\"id\" must be a string");
  g.id = j["id"].get<std::string>();
  const std::string split = j["split"].get<std::string>();
  if (split != "train" && split != "validation" && split != "test") {
    line_error(line, "unknown split \"" + split + "\"");
  }
  *split_out = split;
  if (!j["label"].is_number_integer()) line_error(line, "\"label\" must be an integer");
  g.label = j["label"].get<int>();
  if (!j["num_nodes"].is_number_unsigned() && !j["num_nodes"].is_number_integer()) {
    line_error(line, "\"num_nodes\" must be an integer");
  }
  const long long nn = j["num_nodes"].get<long long>();
  if (nn <= 0) line_error(line, "\"num_nodes\" must be positive");
  g.num_nodes = static_cast<std::size_t>(nn);
  g.adjacency.assign(g.num_nodes * g.num_nodes, 0);

  if (!j["edges"].is_array()) line_error(line, "\"edges\" must be an array");
  for (const auto& e : j["edges"]) {
    if (!e.is_array() || e.size() != 2) line_error(line, "each edge must be a [u, v] pair");
    const long long u = e[0].get<long long>();
    const long long v = e[1].get<long long>();
    if (u < 0 || v < 0 || static_cast<std::size_t>(u) >= g.num_nodes ||
        static_cast<std::size_t>(v) >= g.num_nodes) {
      line_error(line, "edge [" + std::to_string(u) + "," + std::to_string(v) +
                           "] out of range for " + std::to_string(g.num_nodes) + " nodes");
    }
    if (u == v) line_error(line, "self-loop on node " + std::to_string(u));
    if (g.edge(static_cast<std::size_t>(u), static_cast<std::size_t>(v))) {
      line_error(line, "edge [" + std::to_string(u) + "," + std::to_string(v) +
                           "] listed more than once (undirected edges must appear once)");
    }
    g.set_edge(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
  }

  if (j.contains("features")) {
    const auto& rows = j["features"];
    if (!rows.is_array() || rows.size() != g.num_nodes) {
      line_error(line, "\"features\" must have one row per node");
    }
    std::size_t width = 0;
    for (const auto& row : rows) {
      if (!row.is_array()) line_error(line, "feature rows must be arrays");
      if (width == 0) width = row.size();
      if (row.size() != width || width == 0) {
        line_error(line, "feature rows must be non-empty and of equal width");
      }
    }
    g.feature_dim = width;
    g.features.reserve(g.num_nodes * width);
    for (const auto& row : rows) {
      for (const auto& v : row) g.features.push_back(v.get<double>());
    }
    g.features_explicit = true;
  } else {
    assign_degree_features(g, degree_cap);
  }

  if (j.contains("substructures")) {
    const auto& subs = j["substructures"];
    if (!subs.is_array()) line_error(line, "\"substructures\" must be an array");
    for (const auto& sub : subs) {
      if (!sub.is_array() || sub.empty()) line_error(line, "substructures must be non-empty arrays");
      std::vector<std::size_t> nodes;
      for (const auto& v : sub) {
        const long long idx = v.get<long long>();
        if (idx < 0 || static_cast<std::size_t>(idx) >= g.num_nodes) {
          line_error(line, "substructure index " + std::to_string(idx) + " out of range for " +
                               std::to_string(g.num_nodes) + " nodes");
        }
        nodes.push_back(static_cast<std::size_t>(idx));
      }
      g.substructures.push_back(std::move(nodes));
    }
  }

  try {
    g.validate();
  } catch (const std::exception& e) {
    line_error(line, e.what());
  }
  return g;
}

}  // namespace

DatasetSplit parse_dataset(const std::filesystem::path& path, std::size_t degree_cap) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open dataset file: " + path.string());
  }
  DatasetSplit split;
  std::set<std::string> seen_ids;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    if (raw.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(raw);
    } catch (const json::parse_error& e) {
      line_error(line, std::string("malformed JSON: ") + e.what());
    }
    std::string split_name;
    Graph g = parse_graph_line(j, line, degree_cap, &split_name);
    if (!seen_ids.insert(g.id).second) {
      line_error(line, "duplicate graph id \"" + g.id + "\"");
    }
    if (split_name == "train") {
      split.train.push_back(std::move(g));
    } else if (split_name == "validation") {
      split.validation.push_back(std::move(g));
    } else {
      split.test.push_back(std::move(g));
    }
  }
  split.validate();
  return split;
}

namespace {

void write_graphs(std::ofstream& out, const std::vector<Graph>& graphs,
                  const std::string& split_name) {
  for (const Graph& g : graphs) {
    nlohmann::ordered_json j;
    j["id"] = g.id;
    j["split"] = split_name;
    j["label"] = g.label;
    j["num_nodes"] = g.num_nodes;
    json edges = json::array();
    for (std::size_t u = 0; u < g.num_nodes; ++u) {
      for (std::size_t v = u + 1; v < g.num_nodes; ++v) {
        if (g.edge(u, v)) edges.push_back({u, v});
      }
    }
    j["edges"] = std::move(edges);
    if (g.features_explicit) {
      json rows = json::array();
      for (std::size_t v = 0; v < g.num_nodes; ++v) {
        json row = json::array();
        for (std::size_t d = 0; d < g.feature_dim; ++d) row.push_back(g.features[v * g.feature_dim + d]);
        rows.push_back(std::move(row));
      }
      j["features"] = std::move(rows);
    }
    if (!g.substructures.empty()) j["substructures"] = g.substructures;
    out << j.dump() << "\n";
  }
}

}  // namespace

void write_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open output file: " + path.string());
  }
  write_graphs(out, split.train, "train");
  write_graphs(out, split.validation, "validation");
  write_graphs(out, split.test, "test");
}

}  // namespace fewgraph
