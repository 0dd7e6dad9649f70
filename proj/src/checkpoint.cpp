#include "checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "error.hpp"
#include "tensor_io.hpp"

namespace clusdiff {

std::string CheckpointMeta::config_value(const std::string& key) const {
  for (const auto& [k, v] : config)
    if (k == key) return v;
  fail(ErrorKind::Io, "checkpoint config missing key: " + key);
}

int CheckpointMeta::config_int(const std::string& key) const {
  return std::stoi(config_value(key));
}

double CheckpointMeta::config_double(const std::string& key) const {
  return std::stod(config_value(key));
}

namespace {
std::string expect_line(std::istream& is, const char* what) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::Io, std::string("checkpoint truncated at ") + what);
  return line;
}
}  // namespace

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const nn::ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorKind::Io, "cannot open " + path + " for writing");
  os << "CDCK1\n";
  os << "kind " << meta.kind << "\n";
  os << "config " << meta.config.size() << "\n";
  for (const auto& [k, v] : meta.config) os << k << " " << v << "\n";
  os << "vocab " << meta.vocab.size() << "\n";
  for (const auto& l : meta.vocab) os << l << "\n";
  os << "params " << params.count() << "\n";
  for (int id = 0; id < params.count(); ++id) {
    const auto& p = params.at(id);
    std::ostringstream blob(std::ios::binary);
    write_tensor(blob, p.value, Dtype::F64);
    std::string bytes = blob.str();
    os << "param " << p.name << " " << bytes.size() << "\n";
    os.write(bytes.data(), std::streamsize(bytes.size()));
    os << "\n";
  }
  if (!os) fail(ErrorKind::Io, "write failed for " + path);
}

CheckpointMeta load_checkpoint(const std::string& path,
                               std::map<std::string, Tensor>& out_params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorKind::MissingInput, "checkpoint not found: " + path);
  if (expect_line(is, "magic") != "CDCK1") fail(ErrorKind::Io, "not a checkpoint file: " + path);
  CheckpointMeta meta;
  {
    std::istringstream ls(expect_line(is, "kind"));
    std::string tag;
    ls >> tag >> meta.kind;
    if (tag != "kind" || meta.kind.empty()) fail(ErrorKind::Io, "bad kind line in " + path);
  }
  {
    std::istringstream ls(expect_line(is, "config"));
    std::string tag;
    size_t n = 0;
    ls >> tag >> n;
    if (tag != "config") fail(ErrorKind::Io, "bad config header in " + path);
    for (size_t i = 0; i < n; ++i) {
      std::istringstream kv(expect_line(is, "config entry"));
      std::string k, v;
      kv >> k >> v;
      if (k.empty()) fail(ErrorKind::Io, "bad config entry in " + path);
      meta.config.emplace_back(k, v);
    }
  }
  {
    std::istringstream ls(expect_line(is, "vocab"));
    std::string tag;
    size_t n = 0;
    ls >> tag >> n;
    if (tag != "vocab") fail(ErrorKind::Io, "bad vocab header in " + path);
    for (size_t i = 0; i < n; ++i) meta.vocab.push_back(expect_line(is, "vocab entry"));
  }
  {
    std::istringstream ls(expect_line(is, "params"));
    std::string tag;
    size_t n = 0;
    ls >> tag >> n;
    if (tag != "params") fail(ErrorKind::Io, "bad params header in " + path);
    for (size_t i = 0; i < n; ++i) {
      std::istringstream ph(expect_line(is, "param header"));
      std::string tag2, name;
      size_t nbytes = 0;
      ph >> tag2 >> name >> nbytes;
      if (tag2 != "param" || name.empty()) fail(ErrorKind::Io, "bad param header in " + path);
      std::string bytes(nbytes, '\0');
      is.read(bytes.data(), std::streamsize(nbytes));
      if (!is) fail(ErrorKind::Io, "truncated param payload in " + path);
      std::istringstream blob(bytes, std::ios::binary);
      out_params.emplace(name, read_tensor(blob));
      expect_line(is, "param terminator");
    }
  }
  return meta;
}

void install_params(nn::ParamStore& store, const std::map<std::string, Tensor>& values) {
  for (int id = 0; id < store.count(); ++id) {
    auto& p = store.at(id);
    auto it = values.find(p.name);
    if (it == values.end()) fail(ErrorKind::State, "checkpoint lacks parameter " + p.name);
    if (!it->second.same_shape(p.value))
      fail(ErrorKind::State, "checkpoint shape mismatch for " + p.name + ": " +
                                 it->second.shape_str() + " vs " + p.value.shape_str());
    p.value = it->second;
  }
  if (int(values.size()) != store.count())
    fail(ErrorKind::State, "checkpoint has extra parameters");
}

}  // namespace clusdiff
