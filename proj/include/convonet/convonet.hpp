#pragma once

#include "convonet/csv.hpp"
#include "convonet/error.hpp"
#include "convonet/harness.hpp"
#include "convonet/layers.hpp"
#include "convonet/metrics.hpp"
#include "convonet/model.hpp"
#include "convonet/stats.hpp"
#include "convonet/tensor.hpp"
#include "convonet/text.hpp"
#include "convonet/train.hpp"
