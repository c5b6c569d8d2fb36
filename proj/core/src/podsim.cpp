#include "cxlpool/podsim.hpp"

#include <algorithm>
#include <cstring>

namespace cxlpool {

const char* to_string(PostStatus s) {
    switch (s) {
        case PostStatus::Ok: return "ok";
        case PostStatus::RingFull: return "ring_full";
        case PostStatus::DeviceFailed: return "device_failed";
        case PostStatus::Quiescing: return "quiescing";
        case PostStatus::NotAttached: return "not_attached";
    }
    return "?";
}

namespace {

// descriptor payload: req id, kind, size, buffer address (25 bytes)
struct DescWire {
    std::uint64_t req = 0;
    std::uint8_t kind = 0;
    std::uint32_t size = 0;
    std::uint64_t buffer = 0;
};

std::vector<std::byte> encode_desc(const DescWire& d) {
    std::vector<std::byte> out(21);
    std::memcpy(out.data(), &d.req, 8);
    std::memcpy(out.data() + 8, &d.kind, 1);
    std::memcpy(out.data() + 9, &d.size, 4);
    std::memcpy(out.data() + 13, &d.buffer, 8);
    return out;
}

DescWire decode_desc(std::span<const std::byte> b) {
    if (b.size() < 21) throw ParseError("descriptor truncated");
    DescWire d;
    std::memcpy(&d.req, b.data(), 8);
    std::memcpy(&d.kind, b.data() + 8, 1);
    std::memcpy(&d.size, b.data() + 9, 4);
    std::memcpy(&d.buffer, b.data() + 13, 8);
    return d;
}

}  // namespace

PodSim::PodSim(PodSimConfig cfg, SimEngine& eng)
    : cfg_(std::move(cfg)),
      eng_(eng),
      params_(effective_params(cfg_.params, cfg_.topology.pod_kind)),
      orch_state_(OrchestratorState::from_topology(cfg_.topology, cfg_.load_threshold)) {
    auto violations = validate_topology(cfg_.topology);
    if (!violations.empty())
        throw ValidationError("invalid topology: " + violations.front().entity + ": " +
                              violations.front().message);

    std::vector<std::pair<HostId, std::size_t>> privs;
    for (const auto& h : cfg_.topology.hosts) privs.push_back({h.id, cfg_.private_segment_bytes});
    std::size_t total = cfg_.shared_segment_bytes;
    for (const auto& [_, sz] : privs) total += sz;
    region_ = std::make_unique<SharedRegion>(total, RegionMode::Simulation);
    alloc_ = std::make_unique<PoolAllocator>(*region_, cfg_.shared_segment_bytes, privs);

    // Control channels in a fixed order (orchestrator->agent, then
    // agent->orchestrator, hosts ascending): agents locate their endpoints
    // purely by this layout.
    const HostId orch_host = cfg_.topology.hosts.front().id;
    for (const auto& h : cfg_.topology.hosts) {
        AgentState agent;
        agent.host = h.id;
        auto [o2a_tx, o2a_rx] =
            channel_create(*alloc_, cfg_.control_channel_slots, orch_host, h.id);
        auto [a2o_tx, a2o_rx] =
            channel_create(*alloc_, cfg_.control_channel_slots, h.id, orch_host);
        orch_tx_.emplace(h.id, o2a_tx);
        orch_rx_.emplace(h.id, a2o_rx);
        agent.from_orch = o2a_rx;
        agent.to_orch = a2o_tx;
        agents_.emplace(h.id, std::move(agent));
        pool_rd_[h.id];
        pool_wr_[h.id];
    }
    for (const auto& d : cfg_.topology.devices) {
        DeviceState ds;
        ds.spec = d;
        devices_.emplace(d.id, std::move(ds));
    }
}

void PodSim::note(const std::string& event, std::optional<WorkloadId> wl,
                  std::optional<DeviceId> dev) {
    timeline_.push_back({eng_.now(), event, wl, dev});
}

SimTime PodSim::ring_write_ns(const VirtualDevice& v) const {
    return v.pool_rings ? params_.cxl_write_ns : params_.ddr_write_ns;
}

SimTime PodSim::ring_read_ns(const VirtualDevice& v) const {
    return v.pool_rings ? params_.cxl_read_ns : params_.ddr_read_ns;
}

SimTime PodSim::poll_slack() { return eng_.rand_below(params_.poll_interval_ns); }

SimTime PodSim::channel_leg() {
    return params_.cxl_write_ns + poll_slack() + params_.cxl_read_ns;
}

WorkloadId PodSim::add_workload(HostId host, IoKind kind, std::uint32_t io_bytes,
                                SimTime period_ns, std::uint32_t max_ios, SimTime start_ns) {
    if (!cfg_.topology.find_host(host) && !agents_.count(host))
        throw UnknownHostError("host " + std::to_string(host));
    Workload w;
    w.id = next_workload_++;
    w.host = host;
    w.kind = kind;
    w.io_bytes = io_bytes;
    w.period_ns = period_ns;
    w.max_ios = max_ios;
    w.start_ns = start_ns;
    WorkloadId id = w.id;
    workloads_.emplace(id, std::move(w));
    return id;
}

VirtualDevice& PodSim::attach(HostId host, WorkloadId wl, DeviceId dev) {
    auto assigned = orch_state_.assignment(host, wl);
    if (!assigned || *assigned != dev)
        throw NotAssignedError("workload " + std::to_string(wl) + " has no assignment for device " +
                               std::to_string(dev));
    Workload& w = workloads_.at(wl);
    if (w.vdev) detach_workload(w, nullptr);

    const DeviceState& ds = devices_.at(dev);
    const HostId owner = ds.spec.attached_host_id;
    auto v = std::make_unique<VirtualDevice>();
    v->id = dev;
    v->owner = owner;
    v->user = host;
    v->remote = owner != host;
    // hosts that joined after boot have no pre-carved private segment; their
    // rings live in the shared segment at pool cost
    const bool private_ok = alloc_->has_private_segment(host);
    v->pool_rings = v->remote || !private_ok;
    const SegmentOwner seg = v->pool_rings ? SegmentOwner::shared() : SegmentOwner::of(host);
    auto [dtx, drx] = channel_create(*alloc_, cfg_.ring_slots, host, owner, seg);
    v->desc_tx = dtx;
    v->desc_rx = drx;
    auto [ctx, crx] = channel_create(*alloc_, cfg_.ring_slots, owner, host, seg);
    v->comp_tx = ctx;
    v->comp_rx = crx;
    if (v->remote) {
        auto [btx, brx] = channel_create(*alloc_, cfg_.doorbell_slots, host, owner);
        v->doorbell_tx = btx;
        v->doorbell_rx = brx;
        auto [rtx, rrx] = channel_create(*alloc_, cfg_.doorbell_slots, owner, host);
        v->mmio_reply_tx = rtx;
        v->mmio_reply_rx = rrx;
    }
    w.buffer_bytes = std::max<std::size_t>(kLineBytes, (w.io_bytes + kLineBytes - 1) &
                                                           ~(kLineBytes - 1));
    w.buffer = alloc_->alloc(seg, w.buffer_bytes, kLineBytes);
    w.device = dev;
    w.vdev = std::move(v);
    return *w.vdev;
}

void PodSim::detach_workload(Workload& w, const char* why) {
    if (w.vdev) {
        alloc_->free(w.vdev->desc_rx.base_addr());
        alloc_->free(w.vdev->comp_rx.base_addr());
        if (w.vdev->doorbell_rx) alloc_->free(w.vdev->doorbell_rx->base_addr());
        if (w.vdev->mmio_reply_rx) alloc_->free(w.vdev->mmio_reply_rx->base_addr());
        alloc_->free(w.buffer);
        w.vdev.reset();
    }
    w.device.reset();
    if (why) note(why, w.id, std::nullopt);
}

PostStatus PodSim::post_io(WorkloadId wl) {
    Workload& w = workloads_.at(wl);
    if (!w.vdev) return PostStatus::NotAttached;
    VirtualDevice& v = *w.vdev;
    DeviceState& dev = devices_.at(v.id);
    if (dev.failed) return PostStatus::DeviceFailed;
    if (dev.quiescing) return PostStatus::Quiescing;
    if (dev.in_flight.size() >= cfg_.ring_slots - 1) return PostStatus::RingFull;

    const std::uint64_t req_id = next_request_++;

    // publish the payload, then the descriptor; device observes both
    std::vector<std::byte> payload(std::min<std::size_t>(w.io_bytes, w.buffer_bytes));
    for (std::size_t i = 0; i < payload.size(); ++i)
        payload[i] = std::byte(std::uint8_t(req_id + i));
    if (!payload.empty()) region_->write_through(w.host, w.buffer, payload);

    DescWire d{req_id, std::uint8_t(w.kind), w.io_bytes, w.buffer};
    if (v.desc_tx.try_send(encode_desc(d)) != SendStatus::Ok) return PostStatus::RingFull;

    // device side: doorbell transits (remote), descriptor fetched, payload
    // DMA'd, request serviced; data ops run inline, time is modeled below
    if (v.remote) {
        std::uint8_t bell = std::uint8_t(MmioOp::Doorbell);
        if (v.doorbell_tx->try_send_bytes(&bell, 1) == SendStatus::Ok)
            (void)v.doorbell_rx->try_recv();
    }
    auto seen = v.desc_rx.try_recv();
    if (!seen) throw Error("descriptor not visible to device");
    DescWire dd = decode_desc(seen->payload());
    if (dd.req != req_id || dd.buffer != w.buffer)
        throw Error("descriptor corrupted in flight");
    if (!payload.empty()) {
        auto observed = region_->fresh_read(v.owner, dd.buffer, payload.size());
        if (!std::equal(observed.begin(), observed.end(), payload.begin()))
            throw Error("device observed payload differs from published payload");
    }

    IoRequest io;
    io.id = req_id;
    io.kind = w.kind;
    io.size_bytes = w.io_bytes;
    io.buffer = w.buffer;
    io.submit_time = eng_.now();
    requests_[req_id] = RequestState{io, wl, v.id, false};
    dev.in_flight.push_back(req_id);
    w.stats.submitted++;

    // latency model
    const double dev_bw = dev.spec.device_bw_gbs;
    const double pool_bw = host_cxl_bandwidth(cfg_.topology, v.owner, params_);
    const SimTime dur_dma =
        v.remote ? transfer_ns(w.io_bytes, std::min(dev_bw, pool_bw))
                 : transfer_ns(w.io_bytes, dev_bw);
    const SimTime svc = dev.spec.base_latency_ns + transfer_ns(w.io_bytes, dev_bw);
    dev.busy_since_hb += svc;

    SimTime t = eng_.now() + ring_write_ns(v);          // descriptor write
    t += v.remote ? channel_leg() : 0;                   // doorbell forward
    t += params_.mmio_ns;                                // register poke
    t += ring_read_ns(v);                                // device fetches descriptor
    switch (w.kind) {
        case IoKind::UdpTx:
            t = v.remote ? pool_read_fifo(v.owner).admit(t, dur_dma) : t + dur_dma;
            t = dev.service.admit(t, svc);
            t += cfg_.echo_rtt_ns;  // wire + echo peer turnaround
            t = v.remote ? pool_write_fifo(v.owner).admit(t, dur_dma) : t + dur_dma;
            break;
        case IoKind::SsdWrite:
            t = v.remote ? pool_read_fifo(v.owner).admit(t, dur_dma) : t + dur_dma;
            t = dev.service.admit(t, svc);
            break;
        case IoKind::SsdRead:
        case IoKind::UdpRx:
            t = dev.service.admit(t, svc);
            t = v.remote ? pool_write_fifo(v.owner).admit(t, dur_dma) : t + dur_dma;
            break;
    }
    t += ring_write_ns(v);                // completion record
    t += poll_slack() + ring_read_ns(v);  // user notices it

    eng_.schedule(t - eng_.now(), "device" + std::to_string(v.id), EventKind::DeviceDone,
                  [this, req_id] {
                      auto it = requests_.find(req_id);
                      if (it == requests_.end()) return;
                      RequestState req = it->second;
                      requests_.erase(it);
                      if (req.cancelled) return;  // counted when the device died
                      auto wit = workloads_.find(req.workload);
                      if (wit == workloads_.end()) return;
                      Workload& wr = wit->second;
                      auto dit = devices_.find(req.device);
                      if (dit != devices_.end()) {
                          auto& fl = dit->second.in_flight;
                          fl.erase(std::remove(fl.begin(), fl.end(), req.io.id), fl.end());
                      }
                      // completion ring round trip (data ops)
                      if (wr.vdev && wr.vdev->id == req.device) {
                          std::uint64_t rid = req.io.id;
                          if (wr.vdev->comp_tx.try_send_bytes(&rid, 8) == SendStatus::Ok)
                              (void)wr.vdev->comp_rx.try_recv();
                      }
                      wr.stats.completed++;
                      req.io.complete_time = eng_.now();
                      wr.stats.log.push_back(req.io);
                  });
    return PostStatus::Ok;
}

void PodSim::forward_mmio(WorkloadId wl, MmioOp op, std::function<void(SimTime)> done) {
    Workload& w = workloads_.at(wl);
    if (!w.vdev) throw NotAssignedError("workload not attached");
    VirtualDevice& v = *w.vdev;
    if (!v.remote) {
        SimTime cost = params_.mmio_ns;
        eng_.schedule(cost, "mmio", EventKind::Timer, [done, cost] { done(cost); });
        return;
    }
    if (orch_state_.host_state(v.owner) != HostLifecycle::Active)
        throw ChannelDownError("owner host " + std::to_string(v.owner) + " is not active");
    std::uint8_t wire = std::uint8_t(op);
    if (v.doorbell_tx->try_send_bytes(&wire, 1) == SendStatus::Ok)
        (void)v.doorbell_rx->try_recv();
    const SimTime t0 = eng_.now();
    SimTime t = channel_leg() + params_.mmio_ns;  // forward + register access
    if (op == MmioOp::ReadReg) {
        std::uint64_t value = 0xabcd;
        if (v.mmio_reply_tx->try_send_bytes(&value, 8) == SendStatus::Ok)
            (void)v.mmio_reply_rx->try_recv();
        t += channel_leg();  // reply travels back
    }
    eng_.schedule(t, "mmio", EventKind::Timer, [done, t0, this] { done(eng_.now() - t0); });
}

void PodSim::start() {
    if (started_) throw Error("PodSim::start called twice");
    started_ = true;
    eng_.schedule(cfg_.orch_tick_ns, "orchestrator", EventKind::Timer, [this] { orch_tick(); });
    for (auto& [host, _] : agents_) {
        HostId h = host;
        eng_.schedule(cfg_.agent_tick_ns, "agent" + std::to_string(h), EventKind::Timer,
                      [this, h] { agent_tick(h); });
        eng_.schedule(cfg_.heartbeat_interval_ns, "agent" + std::to_string(h),
                      EventKind::Heartbeat, [this, h] { agent_heartbeat(h); });
    }
    for (auto& [id, w] : workloads_) {
        WorkloadId wid = id;
        HostId h = w.host;
        eng_.schedule(w.start_ns, "workload" + std::to_string(wid), EventKind::Timer,
                      [this, wid, h] {
                          auto& agent = agents_.at(h);
                          ControlMessage m = AllocateRequest{h, wid};
                          agent.to_orch.try_send(encode_control(m));
                      });
    }
}

void PodSim::orch_send(HostId host, const ControlMessage& msg) {
    auto it = orch_tx_.find(host);
    if (it == orch_tx_.end()) throw UnknownHostError("no channel to host " + std::to_string(host));
    if (it->second.try_send(encode_control(msg)) != SendStatus::Ok)
        pending_orch_sends_.push_back({host, msg});  // retry next tick
}

void PodSim::orch_plan_moves(const std::vector<MigrationEntry>& moves) {
    for (const auto& m : moves) {
        note("migrate_planned", m.workload, m.to);
        const HostId owner = devices_.at(m.from).spec.attached_host_id;
        orch_send(owner, MigrateCommand{m.workload, m.from, m.to});
    }
}

void PodSim::orch_fail_device(DeviceId dev, bool via_agent_handshake) {
    if (orch_state_.device(dev).health == DeviceHealth::Failed) return;  // already handled
    std::vector<std::pair<HostId, WorkloadId>> affected;
    for (const auto& [key, d] : orch_state_.assignments())
        if (d == dev) affected.push_back(key);
    try {
        MigrationPlan plan = orch_state_.handle_failure(dev);
        note("failure_detected", std::nullopt, dev);
        if (via_agent_handshake) {
            orch_plan_moves(plan.moves);
        } else {
            for (const auto& m : plan.moves) {
                note("migrate_planned", m.workload, m.to);
                orch_send(m.host, AllocateReply{m.workload, m.to});
            }
        }
    } catch (const NoDeviceAvailableError&) {
        note("no_device_available", std::nullopt, dev);
        for (const auto& [host, wl] : affected) orch_send(host, AllocateReply{wl, kNoDevice});
    }
}

void PodSim::orch_handle(const ControlMessage& msg) {
    std::visit(
        [this](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, AllocateRequest>) {
                try {
                    DeviceId dev = orch_state_.allocate_device(m.host, m.workload);
                    note("workload_assigned", m.workload, dev);
                    orch_send(m.host, AllocateReply{m.workload, dev});
                } catch (const NoDeviceAvailableError&) {
                    note("allocation_denied", m.workload, std::nullopt);
                    orch_send(m.host, AllocateReply{m.workload, kNoDevice});
                } catch (const DomainError&) {
                    note("allocation_denied", m.workload, std::nullopt);
                    orch_send(m.host, AllocateReply{m.workload, kNoDevice});
                }
            } else if constexpr (std::is_same_v<T, HeartbeatMsg>) {
                last_hb_seen_[m.device] = eng_.now();
                auto plan = orch_state_.handle_heartbeat(m.host, m.device,
                                                         static_cast<double>(m.load), m.health);
                if (m.health == DeviceHealth::Failed) {
                    orch_fail_device(m.device, true);
                } else if (plan && !plan->moves.empty()) {
                    note("overload_detected", std::nullopt, m.device);
                    orch_plan_moves(plan->moves);
                }
            } else if constexpr (std::is_same_v<T, FailureReportMsg>) {
                orch_fail_device(m.device, true);
            } else if constexpr (std::is_same_v<T, MigrateDone>) {
                auto wit = workloads_.find(m.workload);
                if (wit != workloads_.end())
                    orch_send(wit->second.host, AllocateReply{m.workload, m.to});
                note("migrate_done", m.workload, m.to);
                // hot-remove drains complete once all their migrations land
                for (auto& [host, entries] : drain_pending_) {
                    auto it = std::find_if(entries.begin(), entries.end(),
                                           [&m](const MigrationEntry& e) {
                                               return e.workload == m.workload && e.to == m.to;
                                           });
                    if (it == entries.end()) continue;
                    entries.erase(it);
                    if (entries.empty()) {
                        orch_state_.mark_drain_complete(host);
                        note("host_removed", std::nullopt, std::nullopt);
                    }
                    break;
                }
            } else {
                // HotRemoveRequest / DrainComplete / HotAddAnnounce arrive via
                // the direct operator entry points in this artifact
            }
        },
        msg);
    check_safety();
}

void PodSim::orch_tick() {
    // pump every agent channel dry, hosts in id order
    for (auto& [host, rx] : orch_rx_) {
        while (true) {
            std::optional<Message> m = rx.try_recv();
            if (!m) break;
            orch_handle(decode_control(m->payload()));
        }
    }
    // flush sends that hit a full ring earlier
    auto pending = std::move(pending_orch_sends_);
    pending_orch_sends_.clear();
    for (const auto& [host, msg] : pending) orch_send(host, msg);

    // heartbeat timeouts: 3 missed beats mean the device (or its agent) is
    // gone; skip the quiesce handshake since nobody is listening
    const SimTime limit = 3 * cfg_.heartbeat_interval_ns;
    if (eng_.now() > limit + cfg_.heartbeat_interval_ns) {
        for (auto& [dev, ds] : devices_) {
            if (orch_state_.device(dev).health == DeviceHealth::Failed) continue;
            SimTime last = 0;
            if (auto it = last_hb_seen_.find(dev); it != last_hb_seen_.end()) last = it->second;
            if (eng_.now() - last > limit) {
                note("heartbeat_timeout", std::nullopt, dev);
                ds.failed = true;
                cancel_in_flight(ds);
                orch_fail_device(dev, false);
            }
        }
    }
    eng_.schedule(cfg_.orch_tick_ns, "orchestrator", EventKind::Timer, [this] { orch_tick(); });
}

void PodSim::cancel_in_flight(DeviceState& ds) {
    for (std::uint64_t rid : ds.in_flight) {
        auto it = requests_.find(rid);
        if (it == requests_.end()) continue;
        it->second.cancelled = true;
        auto wit = workloads_.find(it->second.workload);
        if (wit != workloads_.end()) {
            wit->second.stats.cancelled++;
            note("io_cancelled", it->second.workload, it->second.device);
        }
    }
    ds.in_flight.clear();
}

void PodSim::inject_device_failure(DeviceId dev, SimTime at_ns) {
    eng_.schedule(at_ns, "fault", EventKind::FailureInject, [this, dev] {
        DeviceState& ds = devices_.at(dev);
        if (ds.failed) return;
        ds.failed = true;
        note("device_failed", std::nullopt, dev);
        cancel_in_flight(ds);
    });
}

void PodSim::kill_agent(HostId host, SimTime at_ns) {
    eng_.schedule(at_ns, "fault", EventKind::FailureInject, [this, host] {
        agents_.at(host).dead = true;
        note("agent_killed", std::nullopt, std::nullopt);
    });
}

void PodSim::request_hot_remove(HostId host, SimTime at_ns) {
    eng_.schedule(at_ns, "operator", EventKind::Timer, [this, host] {
        DrainPlan plan = orch_state_.hot_remove_host(host);
        note("drain_started", std::nullopt, std::nullopt);
        for (const auto& c : plan.cancelled) {
            note("assignment_cancelled", c.workload, c.device);
            orch_send(host, AllocateReply{c.workload, kNoDevice});
        }
        if (plan.migrations.empty()) {
            note("host_removed", std::nullopt, std::nullopt);
        } else {
            drain_pending_[host] = plan.migrations;
            orch_plan_moves(plan.migrations);
        }
        check_safety();
    });
}

void PodSim::request_hot_add(const HostSpec& host, const std::vector<LinkSpec>& links,
                             const std::vector<PcieDeviceSpec>& devs, SimTime at_ns) {
    eng_.schedule(at_ns, "operator", EventKind::Timer, [this, host, links, devs] {
        std::vector<DeviceId> ids;
        for (const auto& d : devs) ids.push_back(d.id);
        orch_state_.hot_add_host(host.id, ids);
        cfg_.topology.hosts.push_back(host);
        for (const auto& l : links) cfg_.topology.links.push_back(l);
        for (const auto& d : devs) {
            cfg_.topology.devices.push_back(d);
            DeviceState ds;
            ds.spec = d;
            devices_.emplace(d.id, std::move(ds));
        }
        if (!agents_.count(host.id)) {
            const HostId orch_host = cfg_.topology.hosts.front().id;
            AgentState agent;
            agent.host = host.id;
            auto [o2a_tx, o2a_rx] =
                channel_create(*alloc_, cfg_.control_channel_slots, orch_host, host.id);
            auto [a2o_tx, a2o_rx] =
                channel_create(*alloc_, cfg_.control_channel_slots, host.id, orch_host);
            orch_tx_.emplace(host.id, o2a_tx);
            orch_rx_.emplace(host.id, a2o_rx);
            agent.from_orch = o2a_rx;
            agent.to_orch = a2o_tx;
            agents_.emplace(host.id, std::move(agent));
            HostId h = host.id;
            eng_.schedule(cfg_.agent_tick_ns, "agent" + std::to_string(h), EventKind::Timer,
                          [this, h] { agent_tick(h); });
            eng_.schedule(cfg_.heartbeat_interval_ns, "agent" + std::to_string(h),
                          EventKind::Heartbeat, [this, h] { agent_heartbeat(h); });
        }
        note("host_added", std::nullopt, std::nullopt);
        check_safety();
    });
}

void PodSim::finish_attach(Workload& w, DeviceId dev) {
    attach(w.host, w.id, dev);
    if (w.period_ns > 0 && (w.max_ios == 0 || w.issued < w.max_ios)) {
        WorkloadId wid = w.id;
        eng_.schedule(0, "workload" + std::to_string(wid), EventKind::Timer,
                      [this, wid] { workload_tick(wid); });
    }
}

void PodSim::agent_tick(HostId host) {
    AgentState& agent = agents_.at(host);
    if (agent.dead) return;  // silent: no reports, no heartbeats, no migration work

    // newly observed device errors -> failure report
    for (auto& [dev, ds] : devices_) {
        if (ds.spec.attached_host_id != host) continue;
        if (ds.failed && !ds.failure_reported) {
            ds.failure_reported = true;
            note("failure_reported", std::nullopt, dev);
            agent.to_orch.try_send(encode_control(ControlMessage{FailureReportMsg{host, dev}}));
        }
    }

    // orchestrator commands
    while (true) {
        std::optional<Message> m = agent.from_orch.try_recv();
        if (!m) break;
        ControlMessage cm = decode_control(m->payload());
        if (auto* mc = std::get_if<MigrateCommand>(&cm)) {
            DeviceState& ds = devices_.at(mc->from);
            if (!ds.failed) ds.quiescing = true;  // stop accepting posts, drain in-flight
            agent.pending_migrations.push_back(*mc);
        } else if (auto* ar = std::get_if<AllocateReply>(&cm)) {
            auto wit = workloads_.find(ar->workload);
            if (wit != workloads_.end()) {
                Workload& w = wit->second;
                if (ar->device == kNoDevice) {
                    detach_workload(w, "workload_detached");
                    w.halted = true;
                } else if (orch_state_.assignment(w.host, w.id) == ar->device) {
                    bool reattach = w.vdev != nullptr;
                    finish_attach(w, ar->device);
                    note(reattach ? "workload_reattached" : "workload_attached", w.id,
                         ar->device);
                }
                // a reply that no longer matches the assignment is stale;
                // the orchestrator has already sent a fresher one
            }
        }
    }

    // quiesce progress: a drained (or failed) device lets its migrations go
    for (auto it = agent.pending_migrations.begin(); it != agent.pending_migrations.end();) {
        DeviceState& ds = devices_.at(it->from);
        if (ds.failed || ds.in_flight.empty()) {
            agent.to_orch.try_send(
                encode_control(ControlMessage{MigrateDone{it->workload, it->to}}));
            DeviceId from = it->from;
            it = agent.pending_migrations.erase(it);
            bool more = std::any_of(agent.pending_migrations.begin(),
                                    agent.pending_migrations.end(),
                                    [from](const MigrateCommand& c) { return c.from == from; });
            if (!more) ds.quiescing = false;
        } else {
            ++it;
        }
    }

    eng_.schedule(cfg_.agent_tick_ns, "agent" + std::to_string(host), EventKind::Timer,
                  [this, host] { agent_tick(host); });
}

void PodSim::agent_heartbeat(HostId host) {
    AgentState& agent = agents_.at(host);
    if (!agent.dead) {
        for (auto& [dev, ds] : devices_) {
            if (ds.spec.attached_host_id != host) continue;
            // utilization = fraction of the window the device's service stage
            // was occupied; for bandwidth-bound devices this is the bandwidth
            // fraction, for latency-bound ones the op-rate fraction
            double util = std::min(
                1.0, static_cast<double>(ds.busy_since_hb) /
                         static_cast<double>(cfg_.heartbeat_interval_ns));
            ds.busy_since_hb = 0;
            HeartbeatMsg hb{host, dev, static_cast<float>(util),
                            ds.failed ? DeviceHealth::Failed : DeviceHealth::Healthy};
            agent.to_orch.try_send(encode_control(ControlMessage{hb}));
        }
    }
    eng_.schedule(cfg_.heartbeat_interval_ns, "agent" + std::to_string(host),
                  EventKind::Heartbeat, [this, host] { agent_heartbeat(host); });
}

void PodSim::workload_tick(WorkloadId wl) {
    auto wit = workloads_.find(wl);
    if (wit == workloads_.end()) return;
    Workload& w = wit->second;
    if (w.halted) return;
    if (w.max_ios > 0 && w.issued >= w.max_ios) return;
    if (w.vdev) {
        PostStatus st = post_io(wl);
        if (st == PostStatus::Ok)
            w.issued++;
        else
            w.stats.rejected++;
    }
    eng_.schedule(w.period_ns, "workload" + std::to_string(wl), EventKind::Timer,
                  [this, wl] { workload_tick(wl); });
}

const WorkloadStats& PodSim::stats(WorkloadId wl) const { return workloads_.at(wl).stats; }

std::optional<DeviceId> PodSim::attached_device(WorkloadId wl) const {
    return workloads_.at(wl).device;
}

void PodSim::check_safety() const {
    orch_state_.check_invariants();
    for (const auto& [key, dev] : orch_state_.assignments()) {
        auto it = devices_.find(dev);
        if (it == devices_.end())
            throw Error("assignment references unknown device " + std::to_string(dev));
        if (it->second.failed)
            throw Error("assignment references failed device " + std::to_string(dev));
    }
}

}  // namespace cxlpool
