#pragma once

#include "qfluct/config.hpp"
#include "qfluct/manifest.hpp"

namespace qfluct {

// Runs the selected stages in dependency order. Every stage reads its
// inputs from files and writes its outputs to files under
// config.output_dir, so a downstream stage can be deleted and re-run
// alone against cached upstream artifacts. The manifest is flushed after
// every stage and kept when a stage fails; the failing exception
// propagates to the caller.
RunManifest run_pipeline(const PipelineConfig& config);

}  // namespace qfluct
