import type { Metrics } from "./types.js";

export interface StatsPoint {
  records: number;
  meanF1: number | null;
  classes: number;
}

const HISTORY_LIMIT = 240;

/**
 * Session-scoped view of /metrics. Counters are monotone non-decreasing
 * within one service lifetime; a decrease therefore means the service was
 * replaced, and the tracker starts over instead of showing a counter
 * running backwards.
 */
export class SessionStats {
  recordsSeen = 0;
  distinct = 0;
  queriesIssued = 0;
  queriesAnswered = 0;
  queriesSkipped = 0;
  meanF1: number | null = null;
  enp: number | null = null;
  restarted = false;
  readonly history: StatsPoint[] = [];

  update(metrics: Metrics): void {
    const shrank =
      metrics.records_seen < this.recordsSeen ||
      metrics.queries.issued < this.queriesIssued ||
      metrics.queries.answered < this.queriesAnswered ||
      metrics.queries.skipped < this.queriesSkipped;
    if (shrank) {
      this.history.length = 0;
      this.restarted = true;
    } else {
      this.restarted = false;
    }
    this.recordsSeen = metrics.records_seen;
    this.distinct = metrics.distinct_predicted;
    this.queriesIssued = metrics.queries.issued;
    this.queriesAnswered = metrics.queries.answered;
    this.queriesSkipped = metrics.queries.skipped;
    this.meanF1 = metrics.mean_f1;
    this.enp = metrics.enp;
    this.appendPoint();
  }

  private appendPoint(): void {
    const point: StatsPoint = {
      records: this.recordsSeen,
      meanF1: this.meanF1,
      classes: this.distinct,
    };
    const last = this.history[this.history.length - 1];
    if (
      last !== undefined &&
      last.records === point.records &&
      last.meanF1 === point.meanF1 &&
      last.classes === point.classes
    ) {
      return;
    }
    this.history.push(point);
    if (this.history.length > HISTORY_LIMIT) {
      this.history.splice(0, this.history.length - HISTORY_LIMIT);
    }
  }
}
