#pragma once

#include <cstdlib>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lowres_mt/common.hpp"

namespace lowres_mt::pipeline {

using Json = nlohmann::json;

inline constexpr const char* kStoreEnv = "LOWRES_MT_STORE";

/// Store root from an explicit value, else $LOWRES_MT_STORE, else ./store.
inline Path resolve_store_root(const std::string& explicit_root = {}) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv(kStoreEnv); env && *env) return env;
  return "store";
}

/// Serialized form used for hashing and for manifests: sorted keys, fixed indent.
inline std::string canonical_json(const Json& j) { return j.dump(1, ' ', false, Json::error_handler_t::strict) + "\n"; }

inline std::string content_id(const Json& key) { return sha256_hex(key.dump()).substr(0, 16); }

enum class ArtifactKind { model, corpus, table, report };

inline std::string kind_name(ArtifactKind k) {
  switch (k) {
    case ArtifactKind::model: return "model";
    case ArtifactKind::corpus: return "corpus";
    case ArtifactKind::table: return "table";
    case ArtifactKind::report: return "report";
  }
  return "?";
}

/// Content-addressed artifact directory: <root>/<id>/manifest.json plus
/// payload files. An id is the hash of the artifact's kind, inputs and
/// parent ids, so re-running identical work maps to the same id.
class ArtifactStore {
 public:
  explicit ArtifactStore(Path root) : root_(std::move(root)) {}

  const Path& root() const { return root_; }
  Path dir(const std::string& id) const { return root_ / id; }
  bool contains(const std::string& id) const { return std::filesystem::exists(dir(id) / "manifest.json"); }

  static std::string make_id(ArtifactKind kind, const Json& inputs, const std::vector<std::string>& parents) {
    return content_id(Json{{"kind", kind_name(kind)}, {"inputs", inputs}, {"parents", parents}});
  }

  /// Creates the artifact unless it exists. `write_payload` fills the
  /// directory and returns a summary stored in the manifest. The manifest
  /// is written last, so an interrupted write leaves no valid entry.
  std::string put(ArtifactKind kind, const Json& inputs, const std::vector<std::string>& parents,
                  const std::function<Json(const Path&)>& write_payload) {
    for (const auto& p : parents)
      if (!contains(p)) throw Error("artifact store: unknown parent " + p);
    const std::string id = make_id(kind, inputs, parents);
    if (contains(id)) return id;
    const Path d = dir(id);
    std::filesystem::create_directories(d);
    Json summary = write_payload ? write_payload(d) : Json::object();
    Json manifest{{"id", id}, {"kind", kind_name(kind)}, {"inputs", inputs}, {"parents", parents}, {"summary", summary}};
    std::lock_guard lock(mutex_);
    write_file(d / "manifest.json", canonical_json(manifest));
    return id;
  }

  Json manifest(const std::string& id) const {
    if (!contains(id)) throw Error("artifact store: no artifact " + id + " under " + root_.string());
    try {
      return Json::parse(read_file(dir(id) / "manifest.json"));
    } catch (const Json::exception& e) {
      throw Error("artifact store: corrupt manifest for " + id + ": " + e.what());
    }
  }

  std::vector<std::string> parents(const std::string& id) const {
    return manifest(id).at("parents").get<std::vector<std::string>>();
  }

  /// All ancestors of `id` (excluding itself) in depth-first order; throws on a cycle.
  std::vector<std::string> ancestors(const std::string& id) const {
    std::vector<std::string> out;
    std::set<std::string> done, active;
    std::function<void(const std::string&)> visit = [&](const std::string& a) {
      if (active.count(a)) throw Error("artifact store: lineage cycle through " + a);
      if (done.count(a)) return;
      active.insert(a);
      for (const auto& p : parents(a)) visit(p);
      active.erase(a);
      done.insert(a);
      if (a != id) out.push_back(a);
    };
    visit(id);
    return out;
  }

  /// Indented lineage tree, one artifact per line.
  std::string lineage_text(const std::string& id) const {
    std::string out;
    std::function<void(const std::string&, int)> show = [&](const std::string& a, int depth) {
      if (depth > 64) throw Error("artifact store: lineage too deep (cycle?)");
      const Json m = manifest(a);
      out += std::string(2 * static_cast<std::size_t>(depth), ' ') + a + "  " + m.at("kind").get<std::string>();
      if (m.at("inputs").contains("name")) out += "  " + m.at("inputs").at("name").get<std::string>();
      out += "\n";
      for (const auto& p : m.at("parents")) show(p.get<std::string>(), depth + 1);
    };
    ancestors(id);
    show(id, 0);
    return out;
  }

 private:
  Path root_;
  std::mutex mutex_;
};

}  // namespace lowres_mt::pipeline
