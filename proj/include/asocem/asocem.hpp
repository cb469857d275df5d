#pragma once

// Umbrella header.

#include "asocem/blocks.hpp"
#include "asocem/image.hpp"
#include "asocem/levelset.hpp"
#include "asocem/metrics.hpp"
#include "asocem/micrograph.hpp"
#include "asocem/mrc.hpp"
#include "asocem/pipeline.hpp"
#include "asocem/png_io.hpp"
#include "asocem/synthetic.hpp"
#include "asocem/tiff_io.hpp"
