/** Bootstrap: mount the editor against the same-origin service. */

import { ServiceClient } from './api';
import { EditorApp } from './app';

async function start(): Promise<void> {
  const root = document.getElementById('app');
  if (root === null) throw new Error('missing #app mount point');
  const client = new ServiceClient();
  const health = await client.health();
  new EditorApp(root, client, health.tasks);
}

void start();
