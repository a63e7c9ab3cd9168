#pragma once

#include "active_query.hpp"
#include "config.hpp"
#include "envs.hpp"
#include "harness.hpp"
#include "labeling_service.hpp"
#include "mlp.hpp"
#include "policy.hpp"
#include "preference_model.hpp"
#include "rating_model.hpp"
#include "reward_learning.hpp"
#include "reward_net.hpp"
#include "segment.hpp"
#include "stats.hpp"
#include "teacher.hpp"
#include "http_service.hpp"
