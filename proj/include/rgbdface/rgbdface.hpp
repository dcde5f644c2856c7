#pragma once

#include "rgbdface/checksum.hpp"
#include "rgbdface/dataio/manifest.hpp"
#include "rgbdface/dataio/protocol.hpp"
#include "rgbdface/dataio/synthetic.hpp"
#include "rgbdface/depthgen/backbone.hpp"
#include "rgbdface/depthgen/generator.hpp"
#include "rgbdface/depthgen/losses.hpp"
#include "rgbdface/eval/metrics.hpp"
#include "rgbdface/eval/pipeline.hpp"
#include "rgbdface/fusion/losses.hpp"
#include "rgbdface/fusion/model.hpp"
#include "rgbdface/profile.hpp"
#include "rgbdface/training/checkpoint.hpp"
#include "rgbdface/training/config.hpp"
#include "rgbdface/training/depthgen_trainer.hpp"
#include "rgbdface/training/fusion_trainer.hpp"
#include "rgbdface/training/history.hpp"
#include "rgbdface/training/schedule.hpp"
#include "rgbdface/training/split.hpp"
