/** Thin websocket wrapper: parse frames, hand state changes to the session,
 * reconnect with exponential backoff on drop. */

import { parseMessage } from "./protocol.js";
import { SessionState, backoffDelay, onClose, onMessage, onOpen } from "./session.js";

export class GatewayClient {
  private ws: WebSocket | null = null;
  private timer: number | null = null;
  private closed = false;

  constructor(
    readonly url: string,
    readonly session: SessionState,
    private readonly onChange: () => void,
  ) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    this.session.connection = "connecting";
    this.onChange();
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      onOpen(this.session);
      this.onChange();
    };
    ws.onmessage = (ev) => {
      const msg = parseMessage(String(ev.data));
      if (msg === null) {
        this.session.warnings.push("malformed frame ignored");
      } else {
        onMessage(this.session, msg);
      }
      this.onChange();
    };
    ws.onclose = () => {
      if (this.closed) return;
      onClose(this.session);
      this.onChange();
      const delay = backoffDelay(this.session.attempts) * 1000;
      this.timer = window.setTimeout(() => this.open(), delay);
    };
    ws.onerror = () => ws.close();
  }

  send(payload: object): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(payload));
    }
  }

  close(): void {
    this.closed = true;
    if (this.timer !== null) window.clearTimeout(this.timer);
    this.ws?.close();
  }
}
