import { ApiClient } from "./api.js";
import { mountConsole } from "./ui.js";

const api = new ApiClient("");
const controller = mountConsole(document, api);

void controller.refreshQueries();
void controller.refreshStats();
controller.startAlertTail();

setInterval(() => void controller.refreshQueries(), 2000);
setInterval(() => void controller.refreshStats(), 5000);
setInterval(() => void controller.pollReplayOnce(), 500);
