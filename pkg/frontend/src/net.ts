// One long-lived WebSocket to the gateway. Messages are single JSON
// objects; routing is by shape (hello / snapshot / msg_id reply).

import type { ClientMessage, Hello, Reply, Snapshot } from "./protocol.js";
import { isHello, isSnapshot } from "./protocol.js";

export interface GatewayHandlers {
  onOpen(): void;
  onClose(): void;
  onHello(hello: Hello): void;
  onSnapshot(snapshot: Snapshot): void;
  onReply(reply: Reply): void;
}

export class GatewayClient {
  private ws: WebSocket;

  constructor(url: string, handlers: GatewayHandlers) {
    this.ws = new WebSocket(url);
    this.ws.onopen = () => handlers.onOpen();
    this.ws.onclose = () => handlers.onClose();
    // A close event always follows an error; the handler only has to
    // exist so failed connects do not surface as uncaught exceptions.
    this.ws.onerror = () => {};
    this.ws.onmessage = (ev) => {
      let msg;
      try {
        msg = JSON.parse(ev.data as string);
      } catch {
        console.warn("gateway sent non-JSON:", ev.data);
        return;
      }
      if (isHello(msg)) handlers.onHello(msg);
      else if (isSnapshot(msg)) handlers.onSnapshot(msg);
      else handlers.onReply(msg as Reply);
    };
  }

  send(message: ClientMessage): void {
    this.ws.send(JSON.stringify(message));
  }

  close(): void {
    this.ws.close();
  }
}
