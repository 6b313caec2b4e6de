#pragma once

#include "gs2rs/errors.hpp"
#include "gs2rs/ratings.hpp"
#include "gs2rs/preference.hpp"
#include "gs2rs/nn.hpp"
#include "gs2rs/cgan.hpp"
#include "gs2rs/fusion.hpp"
#include "gs2rs/recommenders.hpp"
#include "gs2rs/metrics.hpp"
#include "gs2rs/config.hpp"
#include "gs2rs/pipeline.hpp"
#include "gs2rs/synthetic.hpp"
