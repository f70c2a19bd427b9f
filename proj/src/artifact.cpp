#include "calm/artifact.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>

#include "calm/error.hpp"

namespace calm {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* const kModule = "artifact";
constexpr std::array<char, 8> kMagic{'C', 'A', 'L', 'M', 'A', 'R', 'T', '1'};
constexpr int kFormatVersion = 1;

template <typename T>
T little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return value;
}

struct Payloads {
  json index = json::array();
  std::vector<double> data;

  void add(const std::string& name, const Matrix& m) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
    data.insert(data.end(), m.data(), m.data() + m.size());
  }
};

json mask_json(const SuppressionMask& mask) { return mask.zeroed_axes; }

}  // namespace

void write_artifact(const ModelArtifact& artifact, const fs::path& destination) {
  const CalmTransform& t = artifact.transform;
  const WhiteningModel& w = t.whitening;

  json header;
  header["format_version"] = kFormatVersion;
  header["dim"] = t.dim();
  header["variant"] = to_string(t.variant);
  header["whitening"] = {{"method", to_string(w.method)},
                         {"eig_floor", w.eig_floor},
                         {"covariance", "1/N"},
                         {"granularity", to_string(w.fitted_on)},
                         {"samples", w.samples}};
  header["mask"] = mask_json(t.mask);
  header["alignment"] = {{"concept_count", t.alignment.concept_count},
                         {"converged", t.alignment.converged},
                         {"iterations", t.alignment.iterations},
                         {"accepted_steps", t.alignment.accepted_steps},
                         {"objective_trace", t.alignment.objective_trace},
                         {"orthogonality_trace", t.alignment.orthogonality_trace}};
  header["tolerances"] = {{"composition", 1e-8}, {"orthogonality", 1e-6}};
  if (artifact.concepts) {
    header["concepts"] = {{"k_neg", artifact.concepts->k_neg},
                          {"k_pos", artifact.concepts->k_pos},
                          {"warnings", artifact.concepts->warnings}};
  }
  header["metadata"] = artifact.metadata;

  Payloads p;
  p.add("mean", w.mean);
  p.add("whitening", w.transform);
  p.add("whitening_inverse", w.inverse);
  p.add("eigenvalues", w.eigenvalues);
  p.add("floored_eigenvalues", w.floored_eigenvalues);
  p.add("rotation", t.alignment.rotation);
  p.add("mask_diagonal", t.mask.diagonal());
  if (t.toxic) p.add("toxic_basis", t.toxic->basis);
  if (artifact.concepts) {
    p.add("concept_directions", artifact.concepts->directions);
    p.add("singular_values", artifact.concepts->singular_values);
    p.add("normal_mean", artifact.concepts->normal_mean);
  }
  p.add("composed", t.composed);
  p.add("offset", t.offset);
  header["payloads"] = p.index;

  const std::string text = header.dump();
  std::ofstream out(destination, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + destination.string() + " for writing");
  out.write(kMagic.data(), kMagic.size());
  const auto length = little_endian(static_cast<std::uint64_t>(text.size()));
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : p.data) {
    const auto le = little_endian(v);
    out.write(reinterpret_cast<const char*>(&le), sizeof(le));
  }
  if (!out) throw Error(kModule, "write failed for " + destination.string());
}

ModelArtifact read_artifact(const fs::path& source) {
  std::ifstream in(source, std::ios::binary);
  if (!in) throw Error(kModule, "cannot open " + source.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error(kModule, source.string() + " is not a CALM artifact");
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  length = little_endian(length);
  if (!in || length > (1u << 30)) throw Error(kModule, "corrupt header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw Error(kModule, "truncated header");

  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(kModule, std::string("corrupt header: ") + e.what());
  }

  std::map<std::string, Matrix> payload;
  try {
    if (header.at("format_version").get<int>() != kFormatVersion)
      throw Error(kModule, "unsupported format version");
    for (const auto& entry : header.at("payloads")) {
      const auto rows = entry.at("rows").get<Index>();
      const auto cols = entry.at("cols").get<Index>();
      if (rows < 0 || cols < 0 || rows * cols > (Index{1} << 32))
        throw Error(kModule, "corrupt payload shape");
      Matrix m(rows, cols);
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw Error(kModule, "truncated payload '" + entry.at("name").get<std::string>() + "'");
      for (Index i = 0; i < m.size(); ++i) m.data()[i] = little_endian(m.data()[i]);
      payload[entry.at("name").get<std::string>()] = std::move(m);
    }
  } catch (const json::exception& e) {
    throw Error(kModule, std::string("corrupt header: ") + e.what());
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error(kModule, "trailing bytes after payloads");

  auto take = [&](const std::string& name) -> Matrix& {
    auto it = payload.find(name);
    if (it == payload.end()) throw Error(kModule, "missing payload '" + name + "'");
    return it->second;
  };
  auto take_vector = [&](const std::string& name) -> Vector {
    const Matrix& m = take(name);
    if (m.cols() != 1) throw Error(kModule, "payload '" + name + "' must be a column");
    return m.col(0);
  };

  ModelArtifact artifact;
  try {
    const auto d = header.at("dim").get<Index>();
    CalmTransform& t = artifact.transform;
    t.variant = parse_variant(header.at("variant").get<std::string>());

    const json& wh = header.at("whitening");
    WhiteningModel& w = t.whitening;
    w.method = parse_whitening_method(wh.at("method").get<std::string>());
    w.eig_floor = wh.at("eig_floor").get<double>();
    w.fitted_on = parse_granularity(wh.at("granularity").get<std::string>());
    w.samples = wh.at("samples").get<std::size_t>();
    w.mean = take_vector("mean");
    w.transform = take("whitening");
    w.inverse = take("whitening_inverse");
    w.eigenvalues = take_vector("eigenvalues");
    w.floored_eigenvalues = take_vector("floored_eigenvalues");
    if (w.mean.size() != d || w.transform.rows() != d || w.transform.cols() != d ||
        w.inverse.rows() != d || w.inverse.cols() != d)
      throw Error(kModule, "whitening payloads disagree with dim");

    const json& al = header.at("alignment");
    t.alignment.rotation = take("rotation");
    t.alignment.concept_count = al.at("concept_count").get<int>();
    t.alignment.converged = al.at("converged").get<bool>();
    t.alignment.iterations = al.at("iterations").get<int>();
    t.alignment.accepted_steps = al.at("accepted_steps").get<int>();
    t.alignment.objective_trace = al.at("objective_trace").get<std::vector<double>>();
    t.alignment.orthogonality_trace = al.at("orthogonality_trace").get<std::vector<double>>();
    if (t.alignment.rotation.rows() != d || t.alignment.rotation.cols() != d)
      throw Error(kModule, "rotation payload disagrees with dim");

    t.mask = make_mask(d, header.at("mask").get<std::vector<int>>());
    if ((take_vector("mask_diagonal") - t.mask.diagonal()).cwiseAbs().maxCoeff() != 0.0)
      throw Error(kModule, "mask diagonal disagrees with mask axes");
    if (t.variant == Variant::no_align) t.toxic = ToxicProjector{take("toxic_basis")};

    if (header.contains("concepts")) {
      ConceptBasis basis;
      const json& cj = header.at("concepts");
      basis.k_neg = cj.at("k_neg").get<int>();
      basis.k_pos = cj.at("k_pos").get<int>();
      basis.warnings = cj.at("warnings").get<std::vector<std::string>>();
      basis.directions = take("concept_directions");
      basis.singular_values = take_vector("singular_values");
      basis.normal_mean = take_vector("normal_mean");
      if (basis.directions.rows() != d || basis.directions.cols() != basis.k_neg + basis.k_pos)
        throw Error(kModule, "concept payload disagrees with header");
      artifact.concepts = std::move(basis);
    }

    t.composed = take("composed");
    t.offset = take_vector("offset");
    artifact.metadata = header.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw Error(kModule, std::string("corrupt header: ") + e.what());
  }

  try {
    verify_transform(artifact.transform);
  } catch (const Error& e) {
    throw Error(kModule, std::string("load-time invariant failure: ") + e.what());
  }
  return artifact;
}

void write_concepts_csv(const ConceptBasis& basis, const fs::path& destination) {
  std::ofstream out(destination, std::ios::trunc);
  if (!out) throw Error(kModule, "cannot open " + destination.string() + " for writing");
  out << "class,index,singular_value";
  for (Index i = 0; i < basis.dim(); ++i) out << ",c" << i;
  out << '\n' << std::setprecision(17);
  for (int j = 0; j < basis.concept_count(); ++j) {
    const bool negative = j < basis.k_neg;
    out << (negative ? "negative" : "positive") << ',' << (negative ? j : j - basis.k_neg) << ','
        << basis.singular_values(j);
    for (Index i = 0; i < basis.dim(); ++i) out << ',' << basis.directions(i, j);
    out << '\n';
  }
}

}  // namespace calm
