#pragma once

#include "abam/annotation.hpp"
#include "abam/corpus.hpp"
#include "abam/crf.hpp"
#include "abam/evaluation.hpp"
#include "abam/experiments.hpp"
#include "abam/manifest.hpp"
#include "abam/patterns.hpp"
#include "abam/split.hpp"
#include "abam/stats.hpp"
