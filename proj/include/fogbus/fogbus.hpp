#pragma once

#include "fogbus/protocol.hpp"
#include "fogbus/profile.hpp"
#include "fogbus/transport.hpp"
#include "fogbus/sim_network.hpp"
#include "fogbus/tcp_network.hpp"
#include "fogbus/appmodel.hpp"
#include "fogbus/scheduler.hpp"
#include "fogbus/nsga2.hpp"
#include "fogbus/policy.hpp"
#include "fogbus/log_store.hpp"
#include "fogbus/component.hpp"
#include "fogbus/remote_logger.hpp"
#include "fogbus/task_executor.hpp"
#include "fogbus/master.hpp"
#include "fogbus/actor.hpp"
#include "fogbus/user.hpp"
#include "fogbus/harness.hpp"
#include "fogbus/launch.hpp"
