import { ServiceClient } from './api.js';
import { App } from './controller.js';

const STORAGE_KEY = 'annotator-ui-config';

interface StoredConfig {
  baseUrl: string;
  campaignId: string;
  token: string;
}

function loadConfig(): StoredConfig | null {
  try {
    const raw = localStorage.getItem(STORAGE_KEY);
    return raw ? (JSON.parse(raw) as StoredConfig) : null;
  } catch {
    return null;
  }
}

function saveConfig(config: StoredConfig): void {
  localStorage.setItem(STORAGE_KEY, JSON.stringify(config));
}

function field(form: HTMLFormElement, label: string, name: string, value: string): void {
  const wrap = document.createElement('label');
  wrap.textContent = label + ' ';
  const input = document.createElement('input');
  input.name = name;
  input.value = value;
  wrap.appendChild(input);
  form.appendChild(wrap);
}

function renderConnectForm(root: HTMLElement, stored: StoredConfig | null): void {
  root.replaceChildren();
  const form = document.createElement('form');
  form.className = 'connect-form';
  field(form, 'Service URL', 'baseUrl', stored?.baseUrl ?? window.location.origin);
  field(form, 'Campaign', 'campaignId', stored?.campaignId ?? '');
  field(form, 'Token', 'token', stored?.token ?? '');
  field(form, 'or register as', 'name', '');
  const go = document.createElement('button');
  go.type = 'submit';
  go.textContent = 'Start annotating';
  form.appendChild(go);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const data = new FormData(form);
    void connect(root, {
      baseUrl: String(data.get('baseUrl') || ''),
      campaignId: String(data.get('campaignId') || ''),
      token: String(data.get('token') || ''),
      name: String(data.get('name') || ''),
    });
  });
  root.appendChild(form);
}

async function connect(
  root: HTMLElement,
  options: { baseUrl: string; campaignId: string; token: string; name: string },
): Promise<void> {
  const client = new ServiceClient({
    baseUrl: options.baseUrl,
    campaignId: options.campaignId,
    token: options.token,
  });
  if (!options.token && options.name) {
    await client.register(options.name);
  }
  saveConfig({ baseUrl: options.baseUrl, campaignId: options.campaignId, token: client.token });
  const app = new App(root, client);
  await app.start();
}

function init(): void {
  const root = document.getElementById('app');
  if (!root) return;
  renderConnectForm(root, loadConfig());
}

if (document.readyState !== 'loading') {
  init();
} else {
  document.addEventListener('DOMContentLoaded', init);
}
