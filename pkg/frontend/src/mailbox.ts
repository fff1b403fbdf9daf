// Latest-frame mailbox: message arrival and rendering run at different
// rates, so the render loop always takes the freshest frame and stale ones
// are dropped rather than queued.

export class LatestMailbox<T> {
  private value: T | null = null;
  dropped = 0;

  put(v: T): void {
    if (this.value !== null) this.dropped += 1;
    this.value = v;
  }

  take(): T | null {
    const v = this.value;
    this.value = null;
    return v;
  }

  peek(): T | null {
    return this.value;
  }
}
