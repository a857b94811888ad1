// Umbrella header.
#pragma once

#include "cloudmask/calibrate.hpp"
#include "cloudmask/detect.hpp"
#include "cloudmask/pipeline.hpp"
#include "cloudmask/quantize.hpp"
#include "cloudmask/raster.hpp"
#include "cloudmask/segment.hpp"
#include "cloudmask/synth.hpp"
#include "cloudmask/validate.hpp"
