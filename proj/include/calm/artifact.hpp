#pragma once

#include <filesystem>
#include <optional>

#include "calm/concepts.hpp"
#include "calm/suppression.hpp"
#include "json.hpp"

namespace calm {

/// Everything `calm fit` produces, persisted as one `.calm` file.
///
/// Layout: the 8 magic bytes "CALMART1", a little-endian u64 header length,
/// a UTF-8 JSON header, then little-endian f64 payloads back to back in the
/// order of header["payloads"] (each {"name", "rows", "cols"}, column-major).
struct ModelArtifact {
  CalmTransform transform;
  std::optional<ConceptBasis> concepts;
  // Free-form provenance copied into the header under "metadata".
  nlohmann::json metadata = nlohmann::json::object();
};

void write_artifact(const ModelArtifact& artifact, const std::filesystem::path& destination);

/// Reads and re-verifies the artifact (orthogonality, cached M and b against
/// their factors). Corruption raises calm::Error("artifact", ...).
ModelArtifact read_artifact(const std::filesystem::path& source);

/// Direction per row: class,index,singular_value,c_0,...,c_{d-1}.
void write_concepts_csv(const ConceptBasis& basis, const std::filesystem::path& destination);

}  // namespace calm
