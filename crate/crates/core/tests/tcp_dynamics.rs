//! A single sender/receiver pair over a fixed-delay path with scripted loss.

use redsim_core::simkernel::{RandomStream, Scheduler, SimTime};
use redsim_core::transport::{AckPacket, FlowId, Segment, TcpReceiver, TcpSender};

enum Ev {
    Data(Segment),
    Ack(AckPacket),
    Rto(u64),
}

struct Trace {
    /// `(time, cwnd, in_recovery)` after every ack.
    cwnd: Vec<(f64, f64, bool)>,
    delivered: u64,
    first_sends: u64,
}

/// Runs for `secs` with one-way delay `owd`. `lose(k, seg)` decides the fate
/// of the k-th transmission (0-based, retransmissions included).
fn run(mss: u32, owd: f64, secs: f64, mut lose: impl FnMut(u64, &Segment) -> bool) -> Trace {
    let mut tx = TcpSender::new(FlowId(0), mss);
    let mut rx = TcpReceiver::new(FlowId(0));
    let mut sched: Scheduler<Ev> = Scheduler::new();
    let mut sent = 0u64;
    let mut trace = Trace { cwnd: Vec::new(), delivered: 0, first_sends: 0 };
    let mut armed: Option<u64> = None;

    let emit = |sched: &mut Scheduler<Ev>,
                tx: &TcpSender,
                segs: Vec<Segment>,
                sent: &mut u64,
                first: &mut u64,
                armed: &mut Option<u64>,
                lose: &mut dyn FnMut(u64, &Segment) -> bool| {
        for s in segs {
            if !s.is_retransmit {
                *first += 1;
            }
            let k = *sent;
            *sent += 1;
            if !lose(k, &s) {
                sched.schedule_in(owd, Ev::Data(s));
            }
        }
        if let Some(t) = tx.timer() {
            if *armed != Some(t.generation) {
                *armed = Some(t.generation);
                let at = SimTime::from_secs(t.deadline.max(sched.now().secs()));
                sched.schedule(at, Ev::Rto(t.generation)).unwrap();
            }
        }
    };

    let segs = tx.on_app_start(0.0);
    emit(&mut sched, &tx, segs, &mut sent, &mut trace.first_sends, &mut armed, &mut lose);
    sched.run_until(SimTime::from_secs(secs), |s, ev| {
        let now = s.now().secs();
        match ev.action {
            Ev::Data(seg) => {
                let ack = rx.on_segment_received(&seg);
                s.schedule_in(owd, Ev::Ack(ack));
            }
            Ev::Ack(ack) => {
                let segs = tx.on_ack(&ack, now);
                trace.cwnd.push((now, tx.cwnd(), tx.in_fast_recovery()));
                emit(s, &tx, segs, &mut sent, &mut trace.first_sends, &mut armed, &mut lose);
            }
            Ev::Rto(generation) => {
                if tx.timer().map(|t| t.generation) == Some(generation) {
                    let segs = tx.on_timeout(now);
                    emit(s, &tx, segs, &mut sent, &mut trace.first_sends, &mut armed, &mut lose);
                }
            }
        }
    });
    trace.delivered = rx.delivered();
    trace
}

#[test]
fn cwnd_is_a_sawtooth_under_periodic_loss() {
    // Lose every 300th first transmission; retransmissions always arrive.
    let mut firsts = 0u64;
    let t = run(1460, 0.02, 60.0, |_, seg| {
        if seg.is_retransmit {
            return false;
        }
        firsts += 1;
        firsts.is_multiple_of(300)
    });

    let mut losses = 0;
    let mut epoch_start: Option<f64> = None;
    let mut i = 1;
    while i < t.cwnd.len() {
        let (_, prev, prev_rec) = t.cwnd[i - 1];
        let (_, cur, rec) = t.cwnd[i];
        if !prev_rec && rec {
            // Entry into recovery: find the exit and compare.
            let mut j = i;
            while j < t.cwnd.len() && t.cwnd[j].2 {
                j += 1;
            }
            if let Some(start) = epoch_start {
                assert!(prev > start, "no growth across an epoch: {start} -> {prev}");
            }
            if j < t.cwnd.len() {
                let after = t.cwnd[j].1;
                epoch_start = Some(after);
                assert!(after <= 0.55 * prev, "no multiplicative decrease: {prev} -> {after}");
                assert!(after >= 0.4 * prev, "decrease deeper than halving: {prev} -> {after}");
                losses += 1;
            }
            i = j + 1;
            continue;
        }
        if !prev_rec && !rec {
            // Duplicate acks below the fast-retransmit threshold leave cwnd alone.
            assert!(cur >= prev, "cwnd shrank between losses at {}: {prev} -> {cur}", t.cwnd[i].0);
        }
        i += 1;
    }
    assert!(losses >= 5, "only {losses} loss events");
}

#[test]
fn zero_loss_transfer_delivers_everything_sent() {
    let t = run(1460, 0.01, 5.0, |_, _| false);
    assert!(t.delivered > 0);
    assert!(t.cwnd.iter().all(|c| !c.2));
    // Slow start keeps doubling while nothing is lost.
    assert!(t.cwnd.last().unwrap().1 > 64.0 * 1460.0);
}

fn equal_loss_goodput(mss: u32, seed: u64) -> f64 {
    let mut rng = RandomStream::new(seed);
    let secs = 200.0;
    let t = run(mss, 0.025, secs, |_, _| rng.next_uniform() < 0.01);
    t.delivered as f64 / secs
}

#[test]
fn larger_mss_gets_larger_goodput_at_equal_loss() {
    let big = equal_loss_goodput(1460, 1);
    let mid = equal_loss_goodput(710, 1);
    let small = equal_loss_goodput(335, 1);
    assert!(big > mid && mid > small, "{big} {mid} {small}");
    // The square-root model predicts goodput proportional to MSS.
    let r = big / small;
    assert!((2.9..=6.5).contains(&r), "ratio {r}");
}
