#include "pcmar/checkpoint.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "pcmar/tensor_io.hpp"

namespace pcmar {
namespace {

std::string dims_str(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

void save_checkpoint(const std::vector<ag::Parameter<float>*>& params, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.txt").string());
  for (auto* p : params) {
    const std::string file = p->name() + ".tnsr";
    tensor_write(p->value(), dir / file);
    manifest << p->name() << ' ' << file << ' ' << dims_str(p->value().shape()) << '\n';
  }
  if (!manifest) throw IoError("write failed: " + (dir / "manifest.txt").string());
}

void load_checkpoint(const std::vector<ag::Parameter<float>*>& params, const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("missing checkpoint manifest: " + (dir / "manifest.txt").string());
  std::map<std::string, std::pair<std::string, std::string>> entries;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string name, file, dims;
    if (!(is >> name >> file >> dims)) throw FormatError("bad manifest line '" + line + "' in " + dir.string());
    entries[name] = {file, dims};
  }
  if (entries.size() != params.size()) {
    throw ValueError("checkpoint " + dir.string() + " has " + std::to_string(entries.size()) + " parameters, model has " +
                     std::to_string(params.size()));
  }
  for (auto* p : params) {
    auto it = entries.find(p->name());
    if (it == entries.end()) throw ValueError("checkpoint " + dir.string() + " lacks parameter " + p->name());
    if (it->second.second != dims_str(p->value().shape())) {
      throw ValueError("checkpoint shape mismatch for " + p->name() + ": " + it->second.second + " vs " +
                       dims_str(p->value().shape()));
    }
    Tensor t = tensor_read(dir / it->second.first);
    if (t.shape() != p->value().shape()) throw ValueError("checkpoint tensor shape mismatch for " + p->name());
    p->value() = std::move(t);
  }
}

}  // namespace pcmar
