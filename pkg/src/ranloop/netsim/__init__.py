from .channel import (ChannelModel, Cluster, Ray, LinkBudget, ChannelDomainError,
                      make_cdl_lite, channel_gain, capacity, ray_power, path_loss_db,
                      PROFILE_PARAMS)
from .traffic import (TrafficSource, CLASSES, CLASS_INTER_ARRIVAL_MS,
                      CLASS_ARRIVAL_LAW, CLASS_PACKET_BYTES)
from .qos import (QosRequirement, QosEntry, qos_drift, default_requirements,
                  UnknownMetricError, LOWER_BETTER, HIGHER_BETTER)
from .sim import (Simulator, ScenarioConfig, NetworkState, KpiRecord, BsState, UeState,
                  ConflictError, check_conflicts, run, write_kpi_log, read_kpi_log)
