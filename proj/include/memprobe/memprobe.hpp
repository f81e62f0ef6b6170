#pragma once

// Umbrella header for the seen/unseen memorization probing toolkit.

#include "memprobe/corpus.hpp"
#include "memprobe/error.hpp"
#include "memprobe/evaluate.hpp"
#include "memprobe/experiment.hpp"
#include "memprobe/probe.hpp"
#include "memprobe/split.hpp"
#include "memprobe/synth.hpp"
#include "memprobe/text_format.hpp"
